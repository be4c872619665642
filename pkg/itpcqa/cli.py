r'''cli -- train and apply a no-reference point-cloud quality model

Usage:
  itpcqa project --in=PLY --out=DIR [options]
  itpcqa distort --in=PLY --kind=KINDS --level=LEVELS --out=DIR [options]
  itpcqa synth --source=N --target=N --out=DIR [options]
  itpcqa manifest --mos=CSV --domain=D --out=DIR [--lo=X --hi=X] [options]
  itpcqa train --source=CSV --target=CSV --out=DIR [--set=KV]... [options]
  itpcqa predict --checkpoint=CK --out=DIR [options] PATH...
  itpcqa eval --checkpoint=CK --manifest=CSV --out=DIR [options]
  itpcqa ablate --matrix=M --source=CSV --target=CSV --out=DIR
                [--set=KV]... [options]
  itpcqa gradcheck [--out=DIR] [options]
  itpcqa version
  itpcqa --help

Options:
  --config=PATH        run configuration: `section.key = value` lines
  --seed=N             seed for every stochastic step
  --epochs=N           training epochs (train.epochs)
  --set=KV             override one config knob, e.g. train.batch_size=8
  --out=DIR            directory for artifacts; created as needed
  --cache=DIR          keep projections on disk here
  --mode=M             projection mode: 2d2 (six faces) or 2d1 (one face)
  --face=F             face for 2d1: +x, +y, +z, -x, -y or -z
  --resolution=N       pixels per cube face side
  --size=N             side of the projected network input
  --splat=R            splat radius in pixels
  --kind=KINDS         comma-separated distortions: OT,DS,GN,CN,QN,LL
  --level=LEVELS       comma-separated levels 1..4, one per kind
  --image-size=N       synthetic source image side [default: 96]
  --points=N           points per synthetic cloud [default: 4000]
  --test-fraction=F    share of labeled rows held out [default: 0.25]
  --mos=CSV            `path,mos` table of a quality database
  --domain=D           source or target
  --lo=X               lowest score of the database's MOS scale
  --hi=X               highest score of the database's MOS scale
  --labels=CSV         hidden labels `id,label`; default: the manifest's
                       `.eval.csv` sidecar, else its test split
  --matrix=M           ablation factor: loss, projection or encoder
  --seeds=K            seeds per ablation cell [default: 5]
  --no-pipeline        gradcheck layers and losses only
  -d --debug           turn on debug logging

Each command prints one `status=ok key=value ...` line. Exit status is
1 for usage errors and 2 for data or format errors. ITPCQA_THREADS
caps the decoding and projection pool (default 1).

.. note:: This directive separates usage doc above from design notes below.

  >>> io = Mock()
  >>> main(io.stdout, io.cli_access('itpcqa version'))
  >>> print(io.stdout.getvalue())  # doctest: +ELLIPSIS
  status=ok version=...

Errors come back as exit codes::

  >>> guarded(io.cli_access('itpcqa train --bogus'), io.stdout, io.stderr)
  1
  >>> guarded(io.cli_access('itpcqa eval --checkpoint=nowhere.itpq '
  ...                       '--manifest=m.csv --out=o'),
  ...         io.stdout, io.stderr)
  2
  >>> print(io.stderr.getvalue().splitlines()[-1])  # doctest: +ELLIPSIS
  checkpoint: ...nowhere.itpq...

'''

import csv
import io
import logging
import os
from pathlib import Path
import traceback

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .distortion import DistortionSpec, build_synth_manifests, distort_chain
from .gradsuite import run_suite
from .ply import bounding_cube, read_ply, write_ply
from .projection import (render_face, render_faces, render_multiperspective,
                         resize_bilinear, write_ppm)
from . import relation
from .rtconfig import RunConfig, RunTime, UsageError, threads_from
from .trainer import MATRICES, Session, checkpoint_run, write_log

log = logging.getLogger(__name__)

COMMANDS = ('project', 'distort', 'synth', 'manifest', 'train', 'predict',
            'eval', 'ablate', 'gradcheck', 'version')
FLAG_KEYS = [('--seed', 'train.seed'), ('--epochs', 'train.epochs'),
             ('--mode', 'projection.mode'), ('--face', 'projection.face'),
             ('--resolution', 'projection.face_resolution'),
             ('--size', 'projection.output_size'),
             ('--splat', 'projection.splat_radius')]
PKG = Path(__file__).parent


class GradientCheckFailed(ValueError):
    pass


def summary(stdout, pairs, status='ok'):
    def show(v):
        if v is None:
            return 'undefined'
        return '%.6f' % v if isinstance(v, float) else str(v)
    stdout.write(' '.join(['status=%s' % status] +
                          ['%s=%s' % (k, show(v)) for k, v in pairs]) + '\n')


def main(stdout, access):
    cli = access()
    handler = globals()['do_' + cli.command]
    handler(cli, stdout)


def do_project(cli, stdout):
    cfg = cli.run_config().check().projection
    path = cli.path('--in')
    cloud = read_ply(path)
    out = cli.out_dir()
    names = []
    if cfg.mode == '2d2':
        faces = render_faces(cloud, cfg)
        for f, img in sorted(faces.items()):
            names.append('%s.face%s.ppm' % (path.stem, f))
            write_ppm(out / names[-1], img)
        names.append('%s.mp.ppm' % path.stem)
        write_ppm(out / names[-1],
                  render_multiperspective(cloud, cfg, faces))
    else:
        img = render_face(cloud, bounding_cube(cloud), cfg.face, cfg)
        names.append('%s.face%s.ppm' % (path.stem, cfg.face))
        write_ppm(out / names[-1], img)
        names.append('%s.sp.ppm' % path.stem)
        write_ppm(out / names[-1],
                  resize_bilinear(img, cfg.output_size, cfg.output_size))
    summary(stdout, [('points', len(cloud)), ('mode', cfg.mode),
                     ('files', len(names)), ('out', out)])


def do_distort(cli, stdout):
    kinds = cli.opts['--kind'].split(',')
    levels = [cli.int_opt('--level', text=lv)
              for lv in cli.opts['--level'].split(',')]
    if len(kinds) != len(levels):
        raise UsageError('--kind lists %d distortions, --level %d' %
                         (len(kinds), len(levels)))
    seed = cli.int_opt('--seed', 0)
    specs = [DistortionSpec(k, lv, seed) for k, lv in zip(kinds, levels)]
    path = cli.path('--in')
    cloud = read_ply(path)
    dest = cli.out_dir() / ('%s.%s.ply' % (path.stem, '-'.join(
        '%s%d' % (s.kind, s.level) for s in specs)))
    out = distort_chain(cloud, specs)
    write_ply(dest, out)
    summary(stdout, [('points_in', len(cloud)), ('points_out', len(out)),
                     ('out', dest)])


def do_synth(cli, stdout):
    counts = (cli.int_opt('--source'), cli.int_opt('--target'))
    out = cli.out_dir()
    src, tgt = build_synth_manifests(
        out, counts, cli.int_opt('--seed', 0),
        cli.float_opt('--test-fraction'),
        image_size=cli.int_opt('--image-size'),
        cloud_points=cli.int_opt('--points'))
    summary(stdout, [('source', len(src)), ('target', len(tgt)),
                     ('out', out)])


def do_manifest(cli, stdout):
    path = cli.path('--mos')
    domain = cli.opts['--domain']
    out = cli.out_dir()
    # table paths are relative to the table; manifest paths to out
    prefix = os.path.relpath(str(path.parent), str(out))
    prefix = '' if prefix == '.' else prefix + '/'
    with path.open('r', newline='') as fp:
        records, hidden = relation.import_mos_table(
            fp, str(path), domain, cli.float_opt('--lo'),
            cli.float_opt('--hi'), prefix)
    if domain == 'source':
        records = relation.split_rows(records,
                                      cli.float_opt('--test-fraction'),
                                      cli.int_opt('--seed', 0))
    dest = out / ('%s.csv' % domain)
    relation.write_manifest(dest, records)
    if hidden:
        relation.write_eval_labels(relation.eval_path(dest), hidden)
    summary(stdout, [('rows', len(records)), ('hidden', len(hidden)),
                     ('out', dest)])


def do_train(cli, stdout):
    run = cli.run_config()
    session = cli.session(run)
    source = relation.read_manifest(cli.path('--source'))
    target = relation.read_manifest(cli.path('--target'))
    result = session.train(source, target)
    out = cli.out_dir()
    save_checkpoint(out / 'checkpoint.itpq', result.checkpoint)
    write_log(out / 'train.log.csv', result.log)
    (out / 'config.txt').write_text(run.text())
    last = result.log[-1]
    summary(stdout, [('epochs', len(result.log)),
                     ('loss_r', last.loss_r), ('d_rate', last.d_rate),
                     ('src_srocc', last.src_srocc),
                     ('checkpoint', out / 'checkpoint.itpq')])


def _checkpoint_session(cli, ck):
    '''Session for a checkpoint. With --config or a projection flag the
    supplied projection must agree with the checkpoint's.
    '''
    flagged = [opt for opt, key in FLAG_KEYS
               if key.startswith('projection.') and cli.opts.get(opt)]
    if cli.opts['--config']:
        return cli.session(cli.run_config()), True
    run = cli.run_config(base=checkpoint_run(ck))
    return cli.session(run), bool(flagged)


def do_predict(cli, stdout):
    ck = load_checkpoint(cli.path('--checkpoint'))
    session, check = _checkpoint_session(cli, ck)
    paths = [cli.resolve(p) for p in cli.opts['PATH']]
    scores = session.predict(ck, paths, check)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(['path', 'score'])
    for p, s in zip(cli.opts['PATH'], scores):
        w.writerow([p, '%.6f' % s])
    dest = cli.out_dir() / 'predictions.csv'
    dest.write_text(buf.getvalue())
    summary(stdout, [('n', len(paths)), ('out', dest)])


def do_eval(cli, stdout):
    ck = load_checkpoint(cli.path('--checkpoint'))
    session, check = _checkpoint_session(cli, ck)
    mpath = cli.path('--manifest')
    manifest = relation.read_manifest(mpath)
    if cli.opts['--labels']:
        hidden = relation.read_eval_labels(cli.path('--labels'))
    elif relation.eval_path(mpath).exists():
        hidden = relation.read_eval_labels(relation.eval_path(mpath))
    else:
        hidden = None
    report = session.evaluate(ck, manifest, hidden, check)
    out = cli.out_dir()
    (out / 'eval.csv').write_text('%s\n%s\n' % (report.csv_header(),
                                                report.csv_row()))
    (out / 'eval.txt').write_text(str(report) + '\n')
    summary(stdout, [('n', report.n), ('srocc', report.srocc),
                     ('plcc', report.plcc_mapped),
                     ('rmse', report.rmse_mapped),
                     ('fallback', int(report.fallback))])


def do_ablate(cli, stdout):
    name = cli.opts['--matrix']
    if name not in MATRICES:
        raise UsageError('unknown matrix %s; expected one of %s' %
                         (name, ', '.join(sorted(MATRICES))))
    key, values = MATRICES[name]
    session = cli.session(cli.run_config())
    tpath = cli.path('--target')
    source = relation.read_manifest(cli.path('--source'))
    target = relation.read_manifest(tpath)
    hidden = relation.read_eval_labels(relation.eval_path(tpath))
    table = session.ablate([(key, v) for v in values], source, target,
                           hidden, cli.int_opt('--seeds'))
    out = cli.out_dir()
    (out / 'ablation.csv').write_text(table.csv_text())
    (out / 'verdicts.txt').write_text(table.verdict_text())
    summary(stdout, [('cells', len(table.cells)),
                     ('failed', sum(1 for c in table.cells if c.error)),
                     ('verdicts', len(table.verdicts)),
                     ('out', out / 'ablation.csv')])


def do_gradcheck(cli, stdout):
    reports = run_suite(cli.int_opt('--seed', 0),
                        include_pipeline=not cli.opts['--no-pipeline'])
    lines = [str(r) for r in reports]
    stdout.write(''.join(line + '\n' for line in lines))
    if cli.opts['--out']:
        (cli.out_dir() / 'gradcheck.txt').write_text(
            ''.join(line + '\n' for line in lines))
    failed = [r.name for r in reports if not r.passed]
    summary(stdout, [('checks', len(reports)), ('failed', len(failed)),
                     ('max_rel_err', '%.3e' % max(r.max_error
                                                  for r in reports))],
            status='fail' if failed else 'ok')
    if failed:
        raise GradientCheckFailed('gradients off beyond tolerance: %s' %
                                  ', '.join(failed))


def do_version(cli, stdout):
    summary(stdout, [('version', __version__)])


class CLI(object):
    '''Parsed command line plus the authority it conveys: the working
    directory and the environment.
    '''
    def __init__(self, argv, environ, cwd):
        # Don't require docopt except for command-line usage
        from docopt import docopt

        usage = __doc__.split('\n..')[0]
        self.opts = docopt(usage, argv=argv[1:])
        log.debug('docopt: %s', self.opts)
        self.__environ = environ
        self.__cwd = cwd

    @property
    def command(self):
        return [c for c in COMMANDS if self.opts[c]][0]

    def path(self, opt):
        return self.resolve(self.opts[opt])

    def resolve(self, name):
        return self.__cwd / name

    def out_dir(self):
        out = self.path('--out')
        out.mkdir(parents=True, exist_ok=True)
        return out

    def int_opt(self, opt, default=None, text=None):
        text = self.opts.get(opt) if text is None else text
        if text is None:
            return default
        try:
            return int(text)
        except ValueError:
            raise UsageError('%s: not an integer: %r' % (opt, text))

    def float_opt(self, opt):
        text = self.opts.get(opt)
        if text is None:
            return None
        try:
            return float(text)
        except ValueError:
            raise UsageError('%s: not a number: %r' % (opt, text))

    def run_config(self, base=None):
        '''--config (else base, else defaults), then flags, then each
        --set, in that order.
        '''
        if self.opts['--config']:
            run = RunConfig.read(self.path('--config'))
        else:
            run = RunConfig() if base is None else base
        for opt, key in FLAG_KEYS:
            if self.opts.get(opt) is not None:
                run = run.override(key, self.opts[opt])
        for kv in self.opts.get('--set') or []:
            key, eq, value = kv.partition('=')
            if not eq:
                raise UsageError('--set needs KEY=VALUE, got %r' % kv)
            run = run.override(key.strip(), value.strip())
        return run

    @property
    def threads(self):
        return threads_from(self.__environ)

    def session(self, run):
        cache = self.path('--cache') if self.opts['--cache'] else None
        session, = RunTime.make([Session], config=run, cache_root=cache,
                                threads=self.threads)
        return session


def _origin(oops):
    '''Name of the innermost package module the error came through.
    '''
    for frame in reversed(traceback.extract_tb(oops.__traceback__)):
        where = Path(frame.filename)
        if where.parent == PKG:
            return where.stem
    return 'itpcqa'


def guarded(access, stdout, stderr):
    '''Run :func:`main`; map outcomes to exit codes 0, 1 and 2.
    '''
    try:
        main(stdout, access)
    except SystemExit as oops:
        if isinstance(oops.code, str):
            stderr.write(oops.code + '\n')
            return 1
        return oops.code or 0
    except UsageError as oops:
        stderr.write('usage: %s\n' % oops)
        return 1
    except (ValueError, LookupError, OSError) as oops:
        stderr.write('%s: %s\n' % (_origin(oops), oops))
        return 2
    return 0


class Mock(object):
    '''Stand-in authority for doctests: captured streams, no environment.
    '''
    def __init__(self, cwd=None):
        self.cwd = cwd or Path('.')
        self.environ = {}
        self.stdout = io.StringIO()
        self.stderr = io.StringIO()

    def cli_access(self, cmd):
        argv = cmd.split()
        return lambda: CLI(argv, self.environ, self.cwd)


if __name__ == '__main__':
    def _privileged_main():
        from os import environ
        from sys import argv, stdout, stderr

        def access():
            logging.basicConfig(
                level=logging.DEBUG if ('--debug' in argv or '-d' in argv)
                else logging.INFO)
            return CLI(argv, environ, Path.cwd())

        raise SystemExit(guarded(access, stdout, stderr))

    _privileged_main()
