"""test_checkpoint -- snapshots of trained networks
"""

import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from .checkpoint import (ArchitectureMismatch, Checkpoint,
                         CheckpointFormatError, MagicError, TruncatedError,
                         VersionError, format_checkpoint, load_checkpoint,
                         parse_checkpoint, restore, save_checkpoint,
                         snapshot)
from .layers import Adam
from .models import Networks


def trained_snapshot(encoder='HSCNN', seed=2):
    nets = Networks.build(encoder, seed=seed)
    opt = Adam(nets.parameters(), lr=0.01)
    for _, p in nets.parameters():
        p.grad = np.full_like(p.data, 0.5)
    opt.step()
    meta = {'label.lo': np.array([0.12]), 'label.hi': np.array([1.0])}
    return nets, opt, snapshot(nets, opt, seed, 'train.seed = %d\n' % seed,
                               meta)


class TestFile(unittest.TestCase):
    def test_save_load_restore(self):
        nets, opt, ck = trained_snapshot()
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'checkpoint.itpq'
            save_checkpoint(path, ck)
            back = load_checkpoint(path)
        self.assertEqual(back, ck)
        self.assertEqual(back.meta['label.lo'].tolist(), [0.12])

        fresh = Networks.build('HSCNN', seed=99)
        fresh_opt = Adam(fresh.parameters(), lr=0.01)
        restore(fresh, back, fresh_opt)
        for name, t in nets.named_tensors().items():
            self.assertEqual(fresh.named_tensors()[name].data.tobytes(),
                             t.data.tobytes(), name)
        self.assertEqual(fresh_opt.steps, 1)

    def test_same_state_same_bytes(self):
        a = format_checkpoint(trained_snapshot()[2])
        b = format_checkpoint(trained_snapshot()[2])
        self.assertEqual(a, b)


class TestFormatErrors(unittest.TestCase):
    blob = format_checkpoint(Checkpoint(
        seed=1, config='x\n', tensors={'w': np.arange(6.0).reshape(2, 3)}))

    def test_magic(self):
        with self.assertRaises(MagicError):
            parse_checkpoint(b'PK\x03\x04' + self.blob[4:])

    def test_version(self):
        blob = self.blob[:4] + struct.pack('<I', 2) + self.blob[8:]
        with self.assertRaises(VersionError) as caught:
            parse_checkpoint(blob)
        self.assertEqual((caught.exception.found,
                          caught.exception.expected), (2, 1))

    def test_truncated_everywhere(self):
        for cut in (3, 10, 40, 60, len(self.blob) - 1):
            with self.assertRaises(TruncatedError):
                parse_checkpoint(self.blob[:cut])

    def test_config_tampered(self):
        # config text starts after magic, version, seed, digest, length
        at = 4 + 4 + 8 + 32 + 4
        self.assertEqual(self.blob[at:at + 2], b'x\n')
        blob = self.blob[:at] + b'y' + self.blob[at + 1:]
        with self.assertRaises(CheckpointFormatError):
            parse_checkpoint(blob)


class TestArchitecture(unittest.TestCase):
    def test_encoder_mismatch_named(self):
        _, _, ck = trained_snapshot('SCNN_SINGLE_TAP')
        with self.assertRaises(ArchitectureMismatch) as caught:
            restore(Networks.build('HSCNN'), ck)
        self.assertIn('G.fuse1.weight', str(caught.exception))

    def test_missing_tensor_named(self):
        _, _, ck = trained_snapshot()
        last = list(ck.tensors)[-1]
        del ck.tensors[last]
        with self.assertRaises(ArchitectureMismatch) as caught:
            restore(Networks.build('HSCNN'), ck)
        self.assertIn(last, str(caught.exception))


if __name__ == '__main__':
    unittest.main()
