'''distortion -- point-cloud degradations and synthetic labeled data
--------------------------------------------------------------------

Six cloud distortions at four levels each. Parameters scale with the
full diagonal of the cloud's bounding cube, `diag`:

====  ======================================  =========================
kind  effect                                  level 1 .. 4
====  ======================================  =========================
OT    snap to grid, merge coincident points   step diag/256 .. diag/32
DS    keep floor(fraction * N) random points  0.7, 0.5, 0.3, 0.1
GN    gaussian jitter per axis                sigma diag*.001 .. *.012
CN    gaussian color noise, clamped           sigma 8, 16, 32, 64
QN    color quantization, mid-rise            6, 5, 4, 3 bits
LL    delete points near a random seed point  radius diag*.02 .. *.12
====  ======================================  =========================

Randomness depends on (seed, kind), not on level, so the same points
are kept, jittered or lost more severely as level grows.

  >>> cloud = synth_cloud(1, n_points=500)
  >>> len(distort_cloud(cloud, DistortionSpec('DS', 4, seed=3)))
  50
  >>> q = distort_cloud(cloud, DistortionSpec('QN', 4, seed=3))
  >>> max(len(set(q.colors[:, ch].tolist())) for ch in range(3)) <= 8
  True

Labeled source images are procedural textures, degraded by blur, noise
or color quantization; their label falls with level::

  >>> img, label = synth_source_image(SynthSourceSpec(5, 'blur', 2, 32))
  >>> img, round(label, 2)
  (RasterImage(32x32), 0.56)

'''

from collections import namedtuple
import logging

import numpy as np
from scipy.ndimage import gaussian_filter

from .ply import PointCloud, bounding_cube, write_ply
from .projection import RasterImage, write_ppm
from . import relation

log = logging.getLogger(__name__)

KINDS = ('OT', 'DS', 'GN', 'CN', 'QN', 'LL')
LEVELS = {
    'OT': (1 / 256., 1 / 128., 1 / 64., 1 / 32.),
    'DS': (0.7, 0.5, 0.3, 0.1),
    'GN': (0.001, 0.003, 0.007, 0.012),
    'CN': (8, 16, 32, 64),
    'QN': (6, 5, 4, 3),
    'LL': (0.02, 0.04, 0.08, 0.12),
}
SOURCE_KINDS = ('blur', 'noise', 'quantize')
SOURCE_LEVELS = {
    'blur': (0.6, 1.2, 2.0, 3.2),
    'noise': (8, 16, 32, 64),
    'quantize': (5, 4, 3, 2),
}
LABEL_STEP = 0.22


class AnnihilatedCloudError(ValueError):
    pass


def quality_label(level):
    return 1.0 - LABEL_STEP * level


class DistortionSpec(namedtuple('DistortionSpec', ['kind', 'level', 'seed'])):
    '''
    >>> DistortionSpec('GN', 5)
    Traceback (most recent call last):
      ...
    ValueError: GN level must be in 1..4, got 5
    '''
    def __new__(cls, kind, level, seed=0):
        if kind not in KINDS:
            raise ValueError('unknown distortion kind: %s' % kind)
        if level not in (1, 2, 3, 4):
            raise ValueError('%s level must be in 1..4, got %s' %
                             (kind, level))
        return super(DistortionSpec, cls).__new__(cls, kind, level, seed)

    @property
    def parameter(self):
        return LEVELS[self.kind][self.level - 1]

    def rng(self):
        return np.random.default_rng([self.seed, KINDS.index(self.kind)])


def _round_half_up(x):
    return np.floor(x + 0.5)


def _octree(cloud, spec, diag):
    step = diag * spec.parameter
    corner = cloud.points.min(axis=0)
    cell = np.floor((cloud.points - corner) / step + 0.5).astype(np.int64)
    _, first, inverse = np.unique(cell, axis=0, return_index=True,
                                  return_inverse=True)
    inverse = inverse.reshape(-1)
    # renumber groups by first occurrence
    order = np.argsort(first, kind='stable')
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    group = rank[inverse]
    n = len(order)
    counts = np.bincount(group, minlength=n).astype(np.float64)
    sums = np.zeros((n, 3))
    np.add.at(sums, group, cloud.colors.astype(np.float64))
    colors = _round_half_up(sums / counts[:, None])
    points = corner + cell[first[order]] * step
    return PointCloud(points, colors)


def _downsample(cloud, spec, diag):
    keep = int(np.floor(spec.parameter * len(cloud)))
    if keep < 1:
        raise AnnihilatedCloudError('distortion annihilated cloud')
    index = np.sort(spec.rng().permutation(len(cloud))[:keep])
    return cloud.take(index)


def _geometry_noise(cloud, spec, diag):
    noise = spec.rng().standard_normal(cloud.points.shape)
    return PointCloud(cloud.points + noise * (diag * spec.parameter),
                      cloud.colors)


def _color_noise(cloud, spec, diag):
    noise = spec.rng().standard_normal(cloud.colors.shape) * spec.parameter
    colors = _round_half_up(cloud.colors + noise)
    return PointCloud(cloud.points, np.clip(colors, 0, 255))


def quantize(values, bits):
    '''Mid-rise uniform quantizer on [0, 255], rescaled back to [0, 255].

    >>> quantize(np.array([0, 31, 32, 255]), 3).tolist()
    [0, 0, 36, 255]
    '''
    levels = 2 ** bits
    index = np.floor(np.asarray(values, dtype=np.float64) * levels / 256.)
    return _round_half_up(index * 255. / (levels - 1)).astype(np.uint8)


def _color_quantize(cloud, spec, diag):
    return PointCloud(cloud.points, quantize(cloud.colors, spec.parameter))


def _local_loss(cloud, spec, diag):
    center = cloud.points[spec.rng().integers(len(cloud))]
    dist = np.sqrt(((cloud.points - center) ** 2).sum(axis=1))
    keep = np.flatnonzero(dist > diag * spec.parameter)
    if not len(keep):
        raise AnnihilatedCloudError('distortion annihilated cloud')
    return cloud.take(keep)


_APPLY = {'OT': _octree, 'DS': _downsample, 'GN': _geometry_noise,
          'CN': _color_noise, 'QN': _color_quantize, 'LL': _local_loss}


def distort_cloud(cloud, spec):
    if not len(cloud):
        raise ValueError('distort_cloud: empty cloud')
    diag = bounding_cube(cloud).diagonal
    out = _APPLY[spec.kind](cloud, spec, diag)
    log.debug('%s: %d -> %d points', spec, len(cloud), len(out))
    return out


def distort_chain(cloud, specs):
    '''Superimpose distortions by applying `specs` in order.

    >>> c = synth_cloud(2, n_points=300)
    >>> out = distort_chain(c, [DistortionSpec('DS', 2, 1),
    ...                         DistortionSpec('CN', 1, 1)])
    >>> len(out)
    150
    '''
    for spec in specs:
        cloud = distort_cloud(cloud, spec)
    return cloud


SHAPES = ('sphere', 'box', 'torus', 'wave')


def synth_cloud(seed, n_points=4000):
    '''A procedural colored surface: sphere, box, torus or height field.
    '''
    rng = np.random.default_rng([seed, 0x51])
    shape = SHAPES[seed % len(SHAPES)]
    u, v = rng.random((2, n_points))
    if shape == 'sphere':
        theta, phi = 2 * np.pi * u, np.arccos(2 * v - 1)
        pts = np.stack([np.sin(phi) * np.cos(theta),
                        np.sin(phi) * np.sin(theta), np.cos(phi)], axis=1)
    elif shape == 'box':
        face = rng.integers(6, size=n_points)
        pts = rng.uniform(-1, 1, (n_points, 3))
        axis, sign = face // 2, np.where(face % 2, 1.0, -1.0)
        pts[np.arange(n_points), axis] = sign
        pts *= np.array([1.0, 0.7, 0.5])
    elif shape == 'torus':
        theta, phi = 2 * np.pi * u, 2 * np.pi * v
        r = 1 + 0.35 * np.cos(phi)
        pts = np.stack([r * np.cos(theta), r * np.sin(theta),
                        0.35 * np.sin(phi)], axis=1)
    else:
        x, y = 2 * u - 1, 2 * v - 1
        freq = rng.uniform(1.5, 3.5, 2)
        pts = np.stack([x, y, 0.25 * np.sin(np.pi * freq[0] * x) *
                        np.cos(np.pi * freq[1] * y)], axis=1)
    pts = pts * rng.uniform(0.5, 2.0) + rng.uniform(-1, 1, 3)
    return PointCloud(pts, _surface_colors(rng, pts))


def _surface_colors(rng, pts):
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    t = (pts - lo) / np.maximum(hi - lo, 1e-9)
    base = rng.uniform(40, 215, (2, 3))
    freq = rng.uniform(2, 8, 3)
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * freq * t)
    mix = (t[:, :1] * base[0] + (1 - t[:, :1]) * base[1] +
           60 * (stripes - 0.5))
    return np.clip(_round_half_up(mix), 0, 255)


class SynthSourceSpec(namedtuple('SynthSourceSpec',
                                 ['seed', 'kind', 'level', 'size'])):
    '''Level 0 is the pristine texture, whatever the kind.
    '''
    def __new__(cls, seed, kind, level, size=96):
        if kind not in SOURCE_KINDS:
            raise ValueError('unknown source distortion: %s' % kind)
        if level not in (0, 1, 2, 3, 4):
            raise ValueError('source level must be in 0..4, got %s' % level)
        return super(SynthSourceSpec, cls).__new__(cls, seed, kind, level,
                                                   size)

    @property
    def label(self):
        return quality_label(self.level)


def synth_texture(seed, size):
    '''Seeded mixture of gradients, sinusoids and rectangles, float RGB.
    '''
    rng = np.random.default_rng([seed, 0x7e])
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    img = np.empty((size, size, 3))
    img[...] = rng.uniform(0, 255, 3)
    grad = rng.uniform(-120, 120, (2, 3))
    img += xx[..., None] * grad[0] + yy[..., None] * grad[1]
    for _ in range(3):
        fx, fy = rng.uniform(1, 12, 2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(10, 50, 3)
        img += np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)[..., None] * amp
    for _ in range(rng.integers(3, 8)):
        x0, y0 = rng.integers(0, size, 2)
        w, h = rng.integers(size // 10 + 1, size // 3 + 2, 2)
        img[y0:y0 + h, x0:x0 + w] = rng.uniform(0, 255, 3)
    return np.clip(img, 0, 255)


def synth_source_image(spec):
    img = synth_texture(spec.seed, spec.size)
    if spec.level:
        p = SOURCE_LEVELS[spec.kind][spec.level - 1]
        if spec.kind == 'blur':
            img = gaussian_filter(img, sigma=(p, p, 0), mode='reflect')
        elif spec.kind == 'noise':
            rng = np.random.default_rng([spec.seed, 0x4e, spec.level])
            img = img + rng.standard_normal(img.shape) * p
        else:
            img = quantize(np.clip(_round_half_up(img), 0, 255),
                           p).astype(np.float64)
    pixels = np.clip(_round_half_up(img), 0, 255).astype(np.uint8)
    return RasterImage(pixels), spec.label


def source_variants():
    '''Pristine first, then every (kind, level).
    '''
    return [(SOURCE_KINDS[0], 0)] + [(k, lv) for k in SOURCE_KINDS
                                     for lv in (1, 2, 3, 4)]


def target_variants():
    return [None] + [(k, lv) for k in KINDS for lv in (1, 2, 3, 4)]


def build_synth_manifests(out_dir, counts, seed, test_fraction=0.25,
                          image_size=96, cloud_points=4000):
    '''Write a self-contained source/target task under `out_dir`.

    Sources: `source/*.ppm` and `source.csv` (labels, train/test split).
    Targets: `target/*.ply`, `target.csv` (no labels, split `none`) and
    the hidden labels in `target.eval.csv`.

    :param out_dir: `pathlib.Path`
    :param counts: (n_source, n_target), each >= 40
    '''
    n_source, n_target = counts
    if min(counts) < 40:
        raise ValueError('counts must be >= 40 per domain, got %s' %
                         (counts,))
    (out_dir / 'source').mkdir(parents=True, exist_ok=True)
    (out_dir / 'target').mkdir(parents=True, exist_ok=True)

    variants = source_variants()
    sources = []
    for i in range(n_source):
        kind, level = variants[i % len(variants)]
        tex_seed = seed * 100003 + i // len(variants)
        img, label = synth_source_image(
            SynthSourceSpec(tex_seed, kind, level, image_size))
        rel = 'source/src-%04d.ppm' % i
        write_ppm(out_dir / rel, img)
        sources.append(relation.SampleRecord(
            'src-%04d' % i, rel, 'source', label, 'none'))
    sources = relation.split_rows(sources, test_fraction, seed)

    variants = target_variants()
    targets, hidden = [], {}
    for i in range(n_target):
        variant = variants[i % len(variants)]
        cloud = synth_cloud(seed * 100003 + i // len(variants),
                            n_points=cloud_points)
        level = 0
        if variant is not None:
            kind, level = variant
            cloud = distort_cloud(cloud, DistortionSpec(kind, level,
                                                        seed + i))
        rid = 'tgt-%04d' % i
        rel = 'target/%s.ply' % rid
        write_ply(out_dir / rel, cloud)
        targets.append(relation.SampleRecord(rid, rel, 'target', None,
                                             'none'))
        hidden[rid] = quality_label(level)

    relation.write_manifest(out_dir / 'source.csv', sources)
    relation.write_manifest(out_dir / 'target.csv', targets)
    relation.write_eval_labels(out_dir / 'target.eval.csv', hidden)
    log.info('synthesized %d source and %d target samples in %s',
             n_source, n_target, out_dir)
    return (relation.Manifest(sources, out_dir),
            relation.Manifest(targets, out_dir))
