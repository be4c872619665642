'''relation -- dataset manifests: CSV relations of sample records
----------------------------------------------------------------

A manifest is a CSV file with header `id,path,domain,label,split`.
Paths are relative to the manifest's directory. Target rows never carry
a label; their pseudo-labels live in a sidecar `<name>.eval.csv` with
header `id,label`, read only for evaluation.

  >>> text = """id,path,domain,label,split
  ... s0,source/s0.ppm,source,0.78,train
  ... t0,target/t0.ply,target,,none
  ... """
  >>> rows = parse_records(io.StringIO(text), 'm.csv')
  >>> rows[0].id, rows[0].domain, rows[0].label, rows[0].split
  ('s0', 'source', 0.78, 'train')
  >>> rows[1].label is None
  True

Labels leaking into training-facing target rows are refused::

  >>> parse_records(io.StringIO(text.replace(',,none', ',0.5,none')),
  ...               'm.csv')
  Traceback (most recent call last):
    ...
  itpcqa.relation.ManifestError: m.csv line 3: target row t0 has a label

'''

from collections import namedtuple, OrderedDict
import csv
import io
import logging

import numpy as np

log = logging.getLogger(__name__)

HEADER = ['id', 'path', 'domain', 'label', 'split']
EVAL_HEADER = ['id', 'label']
DOMAINS = ('source', 'target')
SPLITS = ('train', 'test', 'none')


class ManifestError(ValueError):
    pass


class SampleRecord(namedtuple('SampleRecord', HEADER)):
    def csv_row(self):
        return [self.id, self.path, self.domain,
                '' if self.label is None else format_label(self.label),
                self.split]


def format_label(x):
    '''
    >>> format_label(1 - 0.22 * 3), format_label(1.0)
    ('0.34', '1')
    '''
    return '%.10g' % x


class Manifest(object):
    '''Sample records plus the directory their paths are relative to.
    '''
    def __init__(self, records, base):
        self.records = list(records)
        self.base = base

    def __repr__(self):
        return 'Manifest(%d rows @ %s)' % (len(self.records), self.base)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def resolve(self, record):
        return self.base / record.path

    def where(self, domain=None, split=None):
        return [r for r in self.records
                if (domain is None or r.domain == domain) and
                (split is None or r.split == split)]


def parse_records(fp, name):
    reader = csv.reader(fp)
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError('%s: empty manifest' % name)
    if header != HEADER:
        raise ManifestError('%s: expected header %s, got %s' %
                            (name, ','.join(HEADER), ','.join(header)))
    seen = set()
    records = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        where = '%s line %d' % (name, lineno)
        if len(row) != len(HEADER):
            raise ManifestError('%s: expected %d fields, got %d' %
                                (where, len(HEADER), len(row)))
        rid, path, domain, label, split = row
        if rid in seen:
            raise ManifestError('%s: duplicate id %s' % (where, rid))
        seen.add(rid)
        if domain not in DOMAINS:
            raise ManifestError('%s: unknown domain %s' % (where, domain))
        if split not in SPLITS:
            raise ManifestError('%s: unknown split %s' % (where, split))
        if domain == 'target' and label:
            raise ManifestError('%s: target row %s has a label' %
                                (where, rid))
        records.append(SampleRecord(rid, path, domain,
                                    _label(label, where), split))
    return records


def _label(text, where):
    if not text:
        return None
    try:
        x = float(text)
    except ValueError:
        raise ManifestError('%s: bad label %r' % (where, text))
    if not np.isfinite(x):
        raise ManifestError('%s: non-finite label %r' % (where, text))
    return x


def read_manifest(path):
    with path.open('r', newline='') as fp:
        records = parse_records(fp, str(path))
    log.info('read %d records from %s', len(records), path)
    return Manifest(records, path.parent)


def format_records(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(HEADER)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def write_manifest(path, records):
    path.write_text(format_records(records))
    log.info('wrote %d records to %s', len(records), path)


def eval_path(manifest_path):
    '''
    >>> import pathlib
    >>> eval_path(pathlib.PurePosixPath('out/target.csv'))
    PurePosixPath('out/target.eval.csv')
    '''
    return manifest_path.with_name(manifest_path.stem + '.eval.csv')


def format_eval_labels(labels):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(EVAL_HEADER)
    for rid, y in labels.items():
        w.writerow([rid, format_label(y)])
    return buf.getvalue()


def write_eval_labels(path, labels):
    path.write_text(format_eval_labels(labels))
    log.info('wrote %d hidden labels to %s', len(labels), path)


def parse_eval_labels(fp, name):
    '''
    >>> dict(parse_eval_labels(io.StringIO('id,label\\nt0,0.5\\n'), 'x'))
    {'t0': 0.5}
    '''
    reader = csv.reader(fp)
    header = next(reader, None)
    if header != EVAL_HEADER:
        raise ManifestError('%s: expected header id,label, got %s' %
                            (name, header))
    out = OrderedDict()
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        where = '%s line %d' % (name, lineno)
        if len(row) != 2 or not row[1]:
            raise ManifestError('%s: expected id,label' % where)
        out[row[0]] = _label(row[1], where)
    return out


def read_eval_labels(path):
    if not path.exists():
        raise ManifestError('%s: hidden-label sidecar not found' % path)
    with path.open('r', newline='') as fp:
        return parse_eval_labels(fp, str(path))


def split_rows(records, test_fraction, seed):
    '''Assign train/test to labeled rows; ceil(n * fraction) go to test.

    >>> rows = [SampleRecord('s%d' % i, 'p', 'source', 0.5, 'none')
    ...         for i in range(8)]
    >>> [r.split for r in split_rows(rows, 0.25, 0)].count('test')
    2
    '''
    if not 0 <= test_fraction < 1:
        raise ValueError('test_fraction must be in [0, 1), got %s' %
                         test_fraction)
    n = len(records)
    n_test = int(np.ceil(n * test_fraction - 1e-9))
    test = set(np.random.default_rng(seed).permutation(n)[:n_test].tolist())
    return [r._replace(split='test' if i in test else 'train')
            for i, r in enumerate(records)]


def import_mos_table(fp, name, domain, lo=None, hi=None, prefix=''):
    '''Turn a `path,mos` table into manifest records and hidden labels.

    `lo` and `hi` are the database's declared MOS scale; scores outside
    it are refused. Source rows keep their raw MOS as label; target rows
    get none and their MOS goes to the returned sidecar dict.

    >>> table = io.StringIO('path,mos\\na.ply,3.5\\nb.ply,1.25\\n')
    >>> recs, hidden = import_mos_table(table, 'mos.csv', 'target', 1, 5)
    >>> [(r.id, r.label, r.split) for r in recs]
    [('target-0000', None, 'none'), ('target-0001', None, 'none')]
    >>> list(hidden.items())
    [('target-0000', 3.5), ('target-0001', 1.25)]
    '''
    if domain not in DOMAINS:
        raise ManifestError('%s: unknown domain %s' % (name, domain))
    reader = csv.reader(fp)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != [
            'path', 'mos']:
        raise ManifestError('%s: expected header path,mos, got %s' %
                            (name, header))
    records, hidden = [], OrderedDict()
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        where = '%s line %d' % (name, lineno)
        if len(row) != 2:
            raise ManifestError('%s: expected path,mos' % where)
        mos = _label(row[1].strip(), where)
        if mos is None:
            raise ManifestError('%s: missing mos' % where)
        if ((lo is not None and mos < lo) or
                (hi is not None and mos > hi)):
            raise ManifestError('%s: mos %s outside [%s, %s]' %
                                (where, mos, lo, hi))
        rid = '%s-%04d' % (domain, len(records))
        path = prefix + row[0].strip()
        if domain == 'source':
            records.append(SampleRecord(rid, path, domain, mos, 'train'))
        else:
            records.append(SampleRecord(rid, path, domain, None, 'none'))
            hidden[rid] = mos
    log.info('imported %d %s rows from %s', len(records), domain, name)
    return records, hidden
