"""test_distortion -- cloud degradations and the synthetic task
"""

import tempfile
import unittest
from pathlib import Path

import numpy as np

from .distortion import (AnnihilatedCloudError, DistortionSpec, KINDS,
                         SynthSourceSpec, build_synth_manifests,
                         distort_cloud, synth_cloud, synth_source_image)
from .ply import PointCloud, bounding_cube, read_ply
from . import relation


def rows(points):
    return set(map(tuple, points.tolist()))


class TestDistortions(unittest.TestCase):
    cloud = synth_cloud(4, n_points=2000)

    def test_deterministic(self):
        for kind in KINDS:
            spec = DistortionSpec(kind, 2, seed=9)
            a = distort_cloud(self.cloud, spec)
            b = distort_cloud(self.cloud, spec)
            self.assertEqual(a, b, kind)

    def test_downsample_nests_by_level(self):
        kept = [rows(distort_cloud(self.cloud,
                                   DistortionSpec('DS', lv, 1)).points)
                for lv in (1, 2, 3, 4)]
        self.assertEqual([len(k) for k in kept], [1400, 1000, 600, 200])
        for more, fewer in zip(kept, kept[1:]):
            self.assertTrue(fewer <= more)
        self.assertTrue(kept[0] <= rows(self.cloud.points))

    def test_geometry_noise_moves_points_only(self):
        out = distort_cloud(self.cloud, DistortionSpec('GN', 3, 2))
        self.assertTrue(np.array_equal(out.colors, self.cloud.colors))
        moved = np.abs(out.points - self.cloud.points)
        diag = bounding_cube(self.cloud).diagonal
        self.assertGreater(moved.max(), 0)
        # 6 sigma
        self.assertLess(moved.max(), 6 * 0.007 * diag)

    def test_color_noise_clamped(self):
        out = distort_cloud(self.cloud, DistortionSpec('CN', 4, 3))
        self.assertTrue(np.array_equal(out.points, self.cloud.points))
        self.assertFalse(np.array_equal(out.colors, self.cloud.colors))

    def test_quantize_levels(self):
        for level, bits in zip((1, 2, 3, 4), (6, 5, 4, 3)):
            out = distort_cloud(self.cloud, DistortionSpec('QN', level))
            for ch in range(3):
                self.assertLessEqual(len(np.unique(out.colors[:, ch])),
                                     2 ** bits)

    def test_octree_merges(self):
        out = distort_cloud(self.cloud, DistortionSpec('OT', 4))
        self.assertLess(len(out), len(self.cloud))
        self.assertEqual(len(rows(out.points)), len(out))

    def test_local_loss_removes_a_ball(self):
        spec = DistortionSpec('LL', 4, 5)
        out = distort_cloud(self.cloud, spec)
        lost = rows(self.cloud.points) - rows(out.points)
        self.assertTrue(lost)
        center = self.cloud.points[spec.rng().integers(len(self.cloud))]
        radius = bounding_cube(self.cloud).diagonal * 0.12
        for p in lost:
            self.assertLessEqual(np.linalg.norm(np.array(p) - center),
                                 radius)

    def test_annihilated(self):
        lone = PointCloud([[1, 2, 3]], [[0, 0, 0]])
        with self.assertRaises(AnnihilatedCloudError):
            distort_cloud(lone, DistortionSpec('LL', 1))
        with self.assertRaises(AnnihilatedCloudError):
            distort_cloud(lone, DistortionSpec('DS', 1))

    def test_unknown_kind(self):
        with self.assertRaises(ValueError):
            DistortionSpec('XX', 1)


class TestSynthSource(unittest.TestCase):
    def test_label_falls_with_level(self):
        labels = [synth_source_image(SynthSourceSpec(1, 'noise', lv,
                                                     24))[1]
                  for lv in range(5)]
        self.assertEqual(labels, sorted(labels, reverse=True))
        self.assertEqual(labels[0], 1.0)

    def test_degradation_changes_pixels(self):
        clean, _ = synth_source_image(SynthSourceSpec(2, 'blur', 0, 32))
        for kind in ('blur', 'noise', 'quantize'):
            img, _ = synth_source_image(SynthSourceSpec(2, kind, 3, 32))
            self.assertNotEqual(img, clean, kind)


class TestSynthManifests(unittest.TestCase):
    def _build(self, out):
        return build_synth_manifests(out, (40, 40), seed=3,
                                     image_size=24, cloud_points=300)

    def test_layout_and_hidden_labels(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp)
            source, target = self._build(out)
            self.assertEqual((len(source), len(target)), (40, 40))
            self.assertEqual(len(source.where(split='test')), 10)
            self.assertTrue(all(r.label is None for r in target))
            again = relation.read_manifest(out / 'target.csv')
            self.assertEqual(again.records, target.records)
            hidden = relation.read_eval_labels(out / 'target.eval.csv')
            self.assertEqual(sorted(hidden), [r.id for r in target])
            cloud = read_ply(target.resolve(target.records[1]))
            self.assertGreater(len(cloud), 0)

    def test_deterministic_bytes(self):
        with tempfile.TemporaryDirectory() as tmp:
            a, b = Path(tmp) / 'a', Path(tmp) / 'b'
            self._build(a)
            self._build(b)
            names = sorted(p.relative_to(a) for p in a.rglob('*')
                           if p.is_file())
            self.assertEqual(len(names), 40 + 40 + 3)
            for name in names:
                self.assertEqual((a / name).read_bytes(),
                                 (b / name).read_bytes(), name)

    def test_too_few(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValueError):
                build_synth_manifests(Path(tmp), (39, 40), seed=0)


if __name__ == '__main__':
    unittest.main()
