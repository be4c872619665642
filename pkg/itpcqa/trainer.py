'''trainer -- adversarial training, prediction, evaluation and ablations
---------------------------------------------------------------------

Each step draws equal-size source and target batches, computes the
configured loss variant and takes one optimizer step; gradient reversal
between M and D makes the adversarial game a single descent.

Data order is a pure function of (seed, epoch, manifest order); the
shorter domain reshuffles and wraps::

  >>> order = epoch_batches(10, 6, batch_size=4, seed=0, epoch=0)
  >>> len(order), [len(s) for s, t in order]
  (2, [4, 4])
  >>> len(set(np.concatenate([s for s, t in order]).tolist()))
  8
  >>> order[1][1].tolist() == epoch_batches(10, 6, 4, 0, 0)[1][1].tolist()
  True

The training log is line-oriented CSV::

  >>> print(format_log([EpochLog(1, 0.25, 1.5, 0.5, None)]))
  epoch,loss_r,loss_da,d_rate,src_srocc
  1,0.250000,1.500000,0.5000,

'''

from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
import io
import csv
import logging

import numpy as np
from injector import inject

from .checkpoint import snapshot, restore
from .layers import Adam, zero_grad
from .losses import DomainBatch, objective
from .metrics import (evaluate_predictions, srocc, InsufficientData,
                      UndefinedCorrelation, MIN_FIT)
from .models import Networks, forward_pipeline
from .ply import parse_ply
from .proj_cache import ProjectionCache, projection_text
from .projection import project, read_ppm, resize_bilinear
from .relation import ManifestError
from .rtconfig import RunConfig, Threads, UsageError
from .tensor import Tensor, backward, no_grad, precision

log = logging.getLogger(__name__)

LOG_HEADER = ['epoch', 'loss_r', 'loss_da', 'd_rate', 'src_srocc']
DOMAIN_CODES = {'source': 0, 'target': 1}


class ConfigMismatch(ValueError):
    pass


def domain_order(n, need, seed, epoch, domain):
    '''`need` indices from successive seeded permutations of range(n).
    '''
    chunks, have, k = [], 0, 0
    while have < need:
        rng = np.random.default_rng([seed, epoch, DOMAIN_CODES[domain], k])
        chunks.append(rng.permutation(n))
        have += n
        k += 1
    return np.concatenate(chunks)[:need]


def epoch_batches(n_source, n_target, batch_size, seed, epoch):
    '''(source indices, target indices) per step of one epoch.
    '''
    steps = max(n_source, n_target) // batch_size
    if steps < 1 or min(n_source, n_target) < 1:
        raise ValueError('need >= %d samples in one domain and >= 1 in '
                         'the other; got %d source, %d target' %
                         (batch_size, n_source, n_target))
    need = steps * batch_size
    src = domain_order(n_source, need, seed, epoch, 'source')
    tgt = domain_order(n_target, need, seed, epoch, 'target')
    return [(src[i:i + batch_size], tgt[i:i + batch_size])
            for i in range(0, need, batch_size)]


class EpochLog(namedtuple('EpochLog', LOG_HEADER)):
    def csv_row(self):
        return '%d,%.6f,%.6f,%.4f,%s' % (
            self.epoch, self.loss_r, self.loss_da, self.d_rate,
            '' if self.src_srocc is None else '%.6f' % self.src_srocc)


def format_log(rows):
    return '\n'.join([','.join(LOG_HEADER)] + [r.csv_row() for r in rows])


def write_log(path, rows):
    path.write_text(format_log(rows) + '\n')
    log.info('wrote %d epoch rows to %s', len(rows), path)


TrainResult = namedtuple('TrainResult', ['checkpoint', 'log', 'nets'])


def load_image(path, size, projection, cache, label=None):
    '''Network input (3, S, S) in [0, 1] for a PLY cloud or PPM image.

    Clouds are projected (through `cache`) with `projection`, whose
    output_size must be S; images are resized to S x S.
    '''
    label = label or path.name
    suffix = path.suffix.lower()
    if suffix == '.ply':
        data = path.read_bytes()
        img = cache.get(data, projection,
                        lambda: project(parse_ply(data, str(path)),
                                        projection), label)
    elif suffix == '.ppm':
        img = resize_bilinear(read_ppm(path), size, size)
    else:
        raise ManifestError('%s: unsupported sample type %r' %
                            (label, suffix))
    if (img.height, img.width) != (size, size):
        raise ValueError('%s: got %dx%d input; expected %d' % (
            label, img.width, img.height, size))
    return img.as_chw()


def load_samples(items, size, projection, cache, threads=1):
    '''Decode `(label, path)` items in a pool; results in item order.
    '''
    def one(item):
        label, path = item
        try:
            return load_image(path, size, projection, cache, label)
        except OSError as oops:
            raise ManifestError('%s: cannot read %s: %s' %
                                (label, path, oops.strerror or oops))

    with ThreadPoolExecutor(max_workers=threads) as pool:
        arrays = list(pool.map(one, items))
    if not arrays:
        return np.zeros((0, 3, size, size))
    return np.stack(arrays)


def score_images(nets, images, use_mapper=True, chunk=16):
    '''Raw regressor outputs, batch statistics frozen.
    '''
    nets.train(False)
    out = []
    with no_grad():
        for i in range(0, len(images), chunk):
            _, s = forward_pipeline(nets, Tensor(images[i:i + chunk]),
                                    use_mapper)
            out.append(s.data.astype(np.float64))
    return np.concatenate(out) if out else np.zeros(0)


def training_rows(source, target):
    '''Labeled source-train rows, and the target rows training may see.
    '''
    sources = source.where('source', 'train')
    if not sources:
        raise ManifestError('%r: no source training rows' % source)
    for r in sources:
        if r.label is None:
            raise ManifestError('source row %s has no label' % r.id)
    targets = [r for r in target if r.split != 'test']
    if not targets:
        raise ManifestError('%r: no target rows' % target)
    return sources, targets


def label_range(labels):
    lo, hi = float(np.min(labels)), float(np.max(labels))
    if hi <= lo:
        raise ManifestError('source labels are constant (%g)' % lo)
    return lo, hi


def train(source, target, run, cache, threads=1):
    '''Train G, M, D and R; return the checkpoint and the epoch log.

    :param source: labeled source :class:`~itpcqa.relation.Manifest`
    :param target: target Manifest; its labels, if any, are not read
    :param run: :class:`~itpcqa.rtconfig.RunConfig`
    '''
    cfg = run.check().train
    S = cfg.input_size
    sources, targets = training_rows(source, target)
    y_raw = np.array([r.label for r in sources])
    lo, hi = label_range(y_raw)
    ys = (y_raw - lo) / (hi - lo)
    projection = run.network_projection
    xs = load_samples([(r.id, source.resolve(r)) for r in sources],
                      S, projection, cache, threads)
    xt = load_samples([(r.id, target.resolve(r)) for r in targets],
                      S, projection, cache, threads)
    log.info('training %s/%s on %d source, %d target samples, %d epochs',
             cfg.encoder, cfg.loss_variant, len(xs), len(xt), cfg.epochs)

    with precision(cfg.precision):
        nets = Networks.build(cfg.encoder, cfg.seed)
        params = nets.parameters()
        opt = Adam(params, lr=cfg.learning_rate)
        rows = []
        for epoch in range(cfg.epochs):
            nets.train(True)
            lr_sum = da_sum = d_sum = 0.0
            batches = epoch_batches(len(xs), len(xt), cfg.batch_size,
                                    cfg.seed, epoch)
            for si, ti in batches:
                zero_grad(params)
                batch = DomainBatch(Tensor(xs[si]), ys[si], Tensor(xt[ti]))
                obj = objective(batch, nets, run.loss, cfg.loss_variant,
                                cfg.reversal_lambda)
                backward(obj.total)
                opt.step()
                log.debug('epoch %d step %d: loss_r %.5f loss_da %.5f d %d',
                          epoch + 1, opt.steps, obj.loss_r.item(),
                          obj.loss_da.item(), obj.d)
                lr_sum += obj.loss_r.item()
                da_sum += obj.loss_da.item()
                d_sum += obj.d
            n = float(len(batches))
            try:
                fit = srocc(score_images(nets, xs), ys)
            except UndefinedCorrelation:
                fit = None
            row = EpochLog(epoch + 1, lr_sum / n, da_sum / n, d_sum / n, fit)
            log.info('epoch %s', row.csv_row())
            rows.append(row)
        ck = snapshot(nets, opt, cfg.seed, run.text(), {
            'label.lo': np.array([lo]), 'label.hi': np.array([hi])})
    return TrainResult(ck, rows, nets)


def checkpoint_run(ck):
    return RunConfig.parse(ck.config, 'checkpoint config')


def load_networks(ck):
    run = checkpoint_run(ck)
    with precision(run.train.precision):
        nets = Networks.build(run.train.encoder, run.train.seed)
    restore(nets, ck)
    return run, nets


def check_projection(ck_run, supplied):
    '''Refuse inputs projected differently from the training renders.
    '''
    mine = ck_run.network_projection
    theirs = supplied._replace(output_size=mine.output_size)
    if projection_text(mine) != projection_text(theirs):
        raise ConfigMismatch(
            'projection config differs from checkpoint (mode %s face %s '
            'resolution %d vs mode %s face %s resolution %d)' % (
                theirs.mode, theirs.face, theirs.face_resolution,
                mine.mode, mine.face, mine.face_resolution))


def predict(ck, paths, cache, projection=None, threads=1):
    '''De-normalized scores R(M(G(x))) for clouds or images at `paths`.

    :param projection: when given, must match the checkpoint's
                       projection settings
    '''
    run, nets = load_networks(ck)
    if projection is not None:
        check_projection(run, projection)
    S = run.train.input_size
    images = load_samples([(p.name, p) for p in paths], S,
                          run.network_projection, cache, threads)
    with precision(run.train.precision):
        raw = score_images(nets, images)
    lo, hi = float(ck.meta['label.lo'][0]), float(ck.meta['label.hi'][0])
    return raw * (hi - lo) + lo


def evaluation_rows(manifest, hidden=None):
    '''Labeled rows: those in the `hidden` sidecar, else the test split.
    '''
    if hidden is not None:
        rows = [r for r in manifest if r.id in hidden]
        return rows, [hidden[r.id] for r in rows]
    rows = [r for r in manifest.where(split='test') if r.label is not None]
    return rows, [r.label for r in rows]


def evaluate(ck, manifest, cache, hidden=None, projection=None, threads=1):
    rows, labels = evaluation_rows(manifest, hidden)
    if len(rows) < MIN_FIT:
        raise InsufficientData('%r: need >= %d labeled samples, got %d' %
                               (manifest, MIN_FIT, len(rows)))
    pred = predict(ck, [manifest.resolve(r) for r in rows], cache,
                   projection, threads)
    report = evaluate_predictions(pred, labels)
    log.info('evaluated %d samples: srocc %s', report.n, report.srocc)
    return report


MATRICES = {
    'loss': ('train.loss_variant',
             ['R_ONLY', 'T1_MMD', 'T2_ADV', 'T3_SROCC', 'ALL']),
    'projection': ('projection.mode', ['2d1', '2d2']),
    'encoder': ('train.encoder', ['SCNN_SINGLE_TAP', 'HSCNN']),
}


class CellResult(namedtuple('CellResult', [
        'key', 'value', 'srocc', 'plcc', 'error'])):
    '''Per-seed SROCC / mapped PLCC of one ablation cell; None = undefined.
    '''
    @property
    def label(self):
        return '%s=%s' % (self.key, self.value)

    @staticmethod
    def _stats(xs):
        xs = [x for x in xs if x is not None]
        if not xs:
            return None, None
        return float(np.mean(xs)), float(np.std(xs))

    def srocc_stats(self):
        return self._stats(self.srocc)

    def plcc_stats(self):
        return self._stats(self.plcc)


Verdict = namedtuple('Verdict', ['better', 'worse', 'wins', 'seeds'])


class AblationTable(namedtuple('AblationTable', ['cells', 'verdicts'])):
    header = ['cell', 'seeds', 'srocc_mean', 'srocc_std', 'plcc_mean',
              'plcc_std', 'status']

    def csv_text(self):
        def show(v):
            return '' if v is None else '%.6f' % v
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator='\n')
        w.writerow(self.header)
        for c in self.cells:
            sm, ss = c.srocc_stats()
            pm, ps = c.plcc_stats()
            w.writerow([c.label, len(c.srocc), show(sm), show(ss), show(pm),
                        show(ps), 'failed: %s' % c.error if c.error
                        else 'ok'])
        return buf.getvalue()

    def verdict_text(self):
        return ''.join('%s > %s in %d of %d seeds\n' % v
                       for v in self.verdicts)


def verdicts(cells):
    '''For each ordered pair of finished cells, how many seeds the first
    beats the second on target SROCC; only majority wins are kept.
    '''
    out = []
    ok = [c for c in cells if not c.error]
    for a in ok:
        for b in ok:
            if a is b:
                continue
            pairs = [(x, y) for x, y in zip(a.srocc, b.srocc)
                     if x is not None and y is not None]
            wins = sum(1 for x, y in pairs if x > y)
            if pairs and 2 * wins > len(pairs):
                out.append(Verdict(a.label, b.label, wins, len(pairs)))
    return out


def _cell_runs(key, value, base, seeds):
    for k in range(seeds):
        run = base.override(key, value)
        yield run.override('train.seed', str(base.train.seed + k))


def run_ablation(cells, base, source, target, hidden, cache, seeds=5,
                 threads=1):
    '''Train and evaluate each (key, value) cell with `seeds` seeds.

    Each cell changes one knob of `base`. A cell that fails is marked
    and the table is still produced.
    '''
    results = []
    for key, value in cells:
        # a bad key is a usage error, not a failed cell
        base.override(key, str(value)).check()
        scores, plccs = [], []
        error = None
        try:
            for run in _cell_runs(key, str(value), base, seeds):
                ck = train(source, target, run, cache, threads).checkpoint
                report = evaluate(ck, target, cache, hidden,
                                  threads=threads)
                scores.append(report.srocc)
                plccs.append(report.plcc_mapped)
        except UsageError:
            raise
        except (ValueError, ArithmeticError) as oops:
            log.warning('ablation cell %s=%s failed: %s', key, value, oops)
            error = str(oops)
        results.append(CellResult(key, str(value), scores, plccs, error))
    return AblationTable(results, verdicts(results))


class Session(object):
    '''A configured run: config, projection cache and worker count.
    '''
    @inject
    def __init__(self, run: RunConfig, cache: ProjectionCache,
                 threads: Threads):
        self.run = run
        self.cache = cache
        self.threads = threads

    def __repr__(self):
        return 'Session(seed=%d, threads=%d)' % (self.run.train.seed,
                                                  self.threads)

    def train(self, source, target):
        return train(source, target, self.run, self.cache, self.threads)

    def predict(self, ck, paths, check=False):
        return predict(ck, paths, self.cache,
                       self.run.projection if check else None, self.threads)

    def evaluate(self, ck, manifest, hidden=None, check=False):
        return evaluate(ck, manifest, self.cache, hidden,
                        self.run.projection if check else None, self.threads)

    def ablate(self, cells, source, target, hidden, seeds=5):
        return run_ablation(cells, self.run, source, target, hidden,
                            self.cache, seeds, self.threads)
