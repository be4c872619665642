"""test_models -- network shapes, naming and modes
"""

import unittest

import numpy as np

from .models import MIN_INPUT, Networks, forward_pipeline
from .tensor import ShapeError, Tensor, no_grad


def images(n, size, seed=0):
    return Tensor(np.random.default_rng(seed).random((n, 3, size, size)))


class TestNetworks(unittest.TestCase):
    def test_feature_width_independent_of_input_size(self):
        nets = Networks.build('HSCNN', seed=1)
        with no_grad():
            for size in (MIN_INPUT, 48, 96):
                feats, scores = forward_pipeline(nets, images(2, size),
                                                 use_mapper=False)
                self.assertEqual(feats.shape, (2, 128))
                self.assertEqual(scores.shape, (2,))

    def test_input_too_small(self):
        nets = Networks.build('HSCNN', seed=1)
        with self.assertRaises(ShapeError):
            nets.G(images(2, MIN_INPUT - 1))

    def test_names_unique_and_grouped(self):
        names = list(Networks.build('HSCNN', seed=0).named_tensors())
        self.assertEqual(len(names), len(set(names)))
        self.assertEqual(sorted(set(n.split('.')[0] for n in names)),
                         ['D', 'G', 'M', 'R'])
        trainable = [n for n, _ in Networks.build('HSCNN').parameters()]
        self.assertNotIn('G.bn1.running_mean', trainable)
        self.assertIn('G.bn1.running_mean', names)

    def test_single_tap_fuses_fewer_channels(self):
        hs = Networks.build('HSCNN').named_tensors()['G.fuse1.weight']
        st = Networks.build('SCNN_SINGLE_TAP').named_tensors()[
            'G.fuse1.weight']
        self.assertEqual(hs.shape, (128, 256, 1, 1))
        self.assertEqual(st.shape, (128, 64, 1, 1))

    def test_same_seed_same_weights(self):
        a = Networks.build('HSCNN', seed=3).named_tensors()
        b = Networks.build('HSCNN', seed=3).named_tensors()
        for name in a:
            self.assertEqual(a[name].data.tobytes(), b[name].data.tobytes())

    def test_discriminator_probabilities(self):
        nets = Networks.build('HSCNN', seed=2)
        with no_grad():
            p = nets.D(Tensor(np.random.default_rng(2).standard_normal(
                (5, 128)) * 100)).data
        self.assertTrue(((p > 0) & (p < 1)).all())
        self.assertEqual(p.shape, (5,))

    def test_eval_mode_is_per_sample(self):
        """In eval mode a sample's score does not depend on its batch.
        """
        nets = Networks.build('HSCNN', seed=5)
        x = images(3, 32, seed=5)
        with no_grad():
            nets.G(x)  # one training-mode pass moves the running stats
            nets.train(False)
            _, together = forward_pipeline(nets, x, use_mapper=True)
            _, alone = forward_pipeline(nets, Tensor(x.data[:1]),
                                        use_mapper=True)
        self.assertAlmostEqual(float(together.data[0]),
                               float(alone.data[0]), places=5)

    def test_unknown_encoder(self):
        with self.assertRaises(ValueError):
            Networks.build('RESNET')


if __name__ == '__main__':
    unittest.main()
