"""test_cli -- every command end to end in a scratch directory
"""

import shutil
import tempfile
import unittest
from pathlib import Path

from .cli import Mock, guarded
from .ply import read_ply
from .projection import FRAMES, read_ppm
from .relation import eval_path, read_eval_labels, read_manifest

TINY = ('--set=train.input_size=32 --set=train.batch_size=4 --epochs=1 '
        '--resolution=32')


def fields(line):
    return dict(kv.split('=', 1) for kv in line.split())


class CommandCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = Path(tempfile.mkdtemp())

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(str(cls.tmp))

    @classmethod
    def cmd(cls, text):
        '''Run one command; (exit status, summary fields, stderr).
        '''
        io = Mock(cls.tmp)
        code = guarded(io.cli_access('itpcqa ' + text), io.stdout, io.stderr)
        out = io.stdout.getvalue().splitlines()
        return code, fields(out[-1]) if out else {}, io.stderr.getvalue()

    @classmethod
    def synth(cls, out):
        return cls.cmd('synth --source=40 --target=40 --out=%s '
                       '--image-size=32 --points=300 --seed=3' % out)


class TestDataCommands(CommandCase):
    @classmethod
    def setUpClass(cls):
        super(TestDataCommands, cls).setUpClass()
        cls.synth('task')
        cls.cloud = 'task/target/tgt-0000.ply'

    def test_synth_is_reproducible(self):
        code, out, _ = self.synth('again')
        self.assertEqual(code, 0)
        self.assertEqual((out['status'], out['source'], out['target']),
                         ('ok', '40', '40'))
        a, b = self.tmp / 'task', self.tmp / 'again'
        names = sorted(p.relative_to(a) for p in a.rglob('*') if p.is_file())
        self.assertEqual(names, sorted(p.relative_to(b) for p in b.rglob('*')
                                       if p.is_file()))
        for name in names:
            self.assertEqual((a / name).read_bytes(), (b / name).read_bytes(),
                             name)

    def test_project_six_faces(self):
        code, out, _ = self.cmd('project --in=%s --out=proj6 '
                                '--resolution=16 --size=32' % self.cloud)
        self.assertEqual(code, 0)
        self.assertEqual((out['mode'], out['files']), ('2d2', '7'))
        names = set(p.name for p in (self.tmp / 'proj6').iterdir())
        self.assertEqual(names, set(['tgt-0000.face%s.ppm' % f
                                     for f in FRAMES] +
                                    ['tgt-0000.mp.ppm']))
        mp = read_ppm(self.tmp / 'proj6' / 'tgt-0000.mp.ppm')
        self.assertEqual((mp.height, mp.width), (32, 32))

    def test_project_one_face(self):
        code, out, _ = self.cmd('project --in=%s --out=proj1 --mode=2d1 '
                                '--face=-x --resolution=16 --size=24'
                                % self.cloud)
        self.assertEqual(code, 0)
        face = read_ppm(self.tmp / 'proj1' / 'tgt-0000.face-x.ppm')
        sp = read_ppm(self.tmp / 'proj1' / 'tgt-0000.sp.ppm')
        self.assertEqual((face.height, sp.height), (16, 24))

    def test_distort_chain(self):
        code, out, _ = self.cmd('distort --in=%s --kind=DS,GN --level=2,1 '
                                '--out=dist --seed=1' % self.cloud)
        self.assertEqual(code, 0)
        dest = self.tmp / 'dist' / 'tgt-0000.DS2-GN1.ply'
        self.assertEqual(out['out'], str(dest))
        self.assertEqual(len(read_ply(dest)), int(out['points_out']))
        self.assertLess(int(out['points_out']), int(out['points_in']))

    def test_distort_counts_must_match(self):
        code, _, err = self.cmd('distort --in=%s --kind=DS,GN --level=2 '
                                '--out=dist' % self.cloud)
        self.assertEqual(code, 1)
        self.assertIn('--kind lists 2 distortions, --level 1', err)

    def test_manifest_from_mos_table(self):
        db = self.tmp / 'db'
        db.mkdir()
        (db / 'scores.csv').write_text(
            'path,mos\n' + ''.join('clouds/c%d.ply,%d.5\n' % (i, i % 4 + 1)
                                   for i in range(8)))
        code, out, _ = self.cmd('manifest --mos=db/scores.csv '
                                '--domain=target --lo=1 --hi=5 --out=mos')
        self.assertEqual(code, 0)
        self.assertEqual((out['rows'], out['hidden']), ('8', '8'))
        m = read_manifest(self.tmp / 'mos' / 'target.csv')
        self.assertEqual(m.records[0].path, '../db/clouds/c0.ply')
        self.assertIsNone(m.records[0].label)
        self.assertEqual(len(read_eval_labels(
            eval_path(self.tmp / 'mos' / 'target.csv'))), 8)

    def test_gradcheck_layers(self):
        code, out, _ = self.cmd('gradcheck --no-pipeline --out=grads')
        self.assertEqual(code, 0)
        self.assertEqual(out['failed'], '0')
        lines = (self.tmp / 'grads' / 'gradcheck.txt').read_text()
        self.assertEqual(len(lines.splitlines()), int(out['checks']))


class TestModelCommands(CommandCase):
    @classmethod
    def setUpClass(cls):
        super(TestModelCommands, cls).setUpClass()
        cls.synth('task')
        cls.trained = cls.cmd('train --source=task/source.csv '
                              '--target=task/target.csv --out=run ' + TINY)

    def test_train_artifacts(self):
        code, out, _ = self.trained
        self.assertEqual(code, 0)
        self.assertEqual(out['epochs'], '1')
        self.assertEqual(sorted(p.name for p in (self.tmp / 'run').iterdir()),
                         ['checkpoint.itpq', 'config.txt', 'train.log.csv'])
        log = (self.tmp / 'run' / 'train.log.csv').read_text().splitlines()
        self.assertEqual(log[0], 'epoch,loss_r,loss_da,d_rate,src_srocc')
        self.assertEqual(len(log), 2)

    def test_predict(self):
        code, out, _ = self.cmd(
            'predict --checkpoint=run/checkpoint.itpq --out=pred '
            'task/target/tgt-0000.ply task/source/src-0000.ppm')
        self.assertEqual(code, 0)
        self.assertEqual(out['n'], '2')
        rows = (self.tmp / 'pred' / 'predictions.csv').read_text()
        self.assertEqual([r.split(',')[0] for r in rows.splitlines()],
                         ['path', 'task/target/tgt-0000.ply',
                          'task/source/src-0000.ppm'])

    def test_predict_projection_mismatch(self):
        (self.tmp / 'other.cfg').write_text(
            'projection.face_resolution = 32\nprojection.mode = 2d1\n')
        code, _, err = self.cmd(
            'predict --checkpoint=run/checkpoint.itpq --config=other.cfg '
            '--out=pred2 task/target/tgt-0000.ply')
        self.assertEqual(code, 2)
        self.assertTrue(err.startswith('trainer: projection config differs'))

    def test_projection_flag_is_checked(self):
        code, _, err = self.cmd(
            'predict --checkpoint=run/checkpoint.itpq --mode=2d1 '
            '--out=pred3 task/target/tgt-0000.ply')
        self.assertEqual(code, 2)
        self.assertTrue(err.startswith('trainer: projection config differs'))

    def test_agreeing_projection_flag(self):
        code, out, _ = self.cmd(
            'predict --checkpoint=run/checkpoint.itpq --resolution=32 '
            '--out=pred4 task/target/tgt-0000.ply')
        self.assertEqual((code, out['n']), (0, '1'))

    def test_eval_uses_sidecar(self):
        code, out, _ = self.cmd('eval --checkpoint=run/checkpoint.itpq '
                                '--manifest=task/target.csv --out=ev')
        self.assertEqual(code, 0)
        self.assertEqual(out['n'], '40')
        lines = (self.tmp / 'ev' / 'eval.csv').read_text().splitlines()
        self.assertEqual(lines[0].split(',')[:2], ['n', 'srocc'])
        self.assertEqual(lines[1].split(',')[0], '40')

    def test_ablation_with_failing_cells(self):
        code, out, _ = self.cmd(
            'ablate --matrix=encoder --source=task/source.csv '
            '--target=task/target.csv --out=abl --seeds=1 ' + TINY +
            ' --set=train.batch_size=64')
        self.assertEqual(code, 0)
        self.assertEqual((out['cells'], out['failed'], out['verdicts']),
                         ('2', '2', '0'))
        table = (self.tmp / 'abl' / 'ablation.csv').read_text()
        self.assertEqual(len(table.splitlines()), 3)

    def test_unknown_matrix(self):
        code, _, err = self.cmd('ablate --matrix=optimizer '
                                '--source=task/source.csv '
                                '--target=task/target.csv --out=abl2')
        self.assertEqual(code, 1)
        self.assertIn('unknown matrix optimizer', err)

    def test_unknown_config_key(self):
        code, _, err = self.cmd('train --source=task/source.csv '
                                '--target=task/target.csv --out=bad '
                                '--set=train.sed=1')
        self.assertEqual(code, 1)
        self.assertEqual(err, 'usage: unknown config key: train.sed\n')

    def test_missing_manifest(self):
        code, _, err = self.cmd('train --source=task/nowhere.csv '
                                '--target=task/target.csv --out=bad ' + TINY)
        self.assertEqual(code, 2)
        self.assertIn('nowhere.csv', err)


if __name__ == '__main__':
    unittest.main()
