r'''checkpoint -- versioned binary snapshots of the networks
----------------------------------------------------------

Byte layout, all little-endian::

  magic    4 bytes  b'ITPQ'
  version  u32      1
  seed     i64
  digest   32 bytes sha256 of the config text
  config   u32 length + utf-8 canonical config text
  3 groups: parameters, optimizer state, meta; each is
    count  u32
    count blocks of:
      name   u16 length + utf-8
      dtype  u8  (1 = f4, 2 = f8, 3 = i8)
      rank   u8
      dims   rank x u32
      data   product(dims) items

  >>> import numpy as np
  >>> ck = Checkpoint(seed=3, config='train.seed = 3\n',
  ...                 tensors={'R.fc2.bias': np.zeros(1, np.float32)},
  ...                 optimizer={'adam.step': np.array([2])},
  ...                 meta={'label.lo': np.array([0.0])})
  >>> blob = format_checkpoint(ck)
  >>> blob[:4], len(blob)
  (b'ITPQ', 150)
  >>> parse_checkpoint(blob) == ck
  True

  >>> parse_checkpoint(b'XXXX' + blob[4:])
  Traceback (most recent call last):
    ...
  itpcqa.checkpoint.MagicError: bad magic b'XXXX'; not a checkpoint

'''

from collections import OrderedDict
import hashlib
import logging
import struct

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b'ITPQ'
VERSION = 1
DTYPES = {1: np.dtype('<f4'), 2: np.dtype('<f8'), 3: np.dtype('<i8')}
CODES = dict((dt, code) for code, dt in DTYPES.items())


class CheckpointFormatError(ValueError):
    pass


class MagicError(CheckpointFormatError):
    pass


class VersionError(CheckpointFormatError):
    def __init__(self, found, expected=VERSION):
        CheckpointFormatError.__init__(
            self, 'checkpoint version %d; expected %d' % (found, expected))
        self.found, self.expected = found, expected


class TruncatedError(CheckpointFormatError):
    def __init__(self, offset, what):
        CheckpointFormatError.__init__(
            self, 'truncated %s at byte offset %d' % (what, offset))
        self.offset = offset


class UnknownDtypeError(CheckpointFormatError):
    pass


class ArchitectureMismatch(CheckpointFormatError):
    pass


def config_digest(text):
    return hashlib.sha256(text.encode('utf-8')).digest()


class Checkpoint(object):
    def __init__(self, seed, config, tensors, optimizer=None, meta=None):
        self.seed = seed
        self.config = config
        self.tensors = OrderedDict(tensors)
        self.optimizer = OrderedDict(optimizer or {})
        self.meta = OrderedDict(meta or {})

    def __repr__(self):
        return 'Checkpoint(seed=%d, %d tensors)' % (self.seed,
                                                     len(self.tensors))

    @property
    def digest(self):
        return config_digest(self.config)

    def groups(self):
        return [self.tensors, self.optimizer, self.meta]

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return False
        if (self.seed, self.config) != (other.seed, other.config):
            return False
        for mine, theirs in zip(self.groups(), other.groups()):
            if list(mine) != list(theirs):
                return False
            for k in mine:
                a, b = mine[k], theirs[k]
                if a.dtype != b.dtype or a.tobytes() != b.tobytes() or \
                        a.shape != b.shape:
                    return False
        return True

    def __ne__(self, other):
        return not self == other

    __hash__ = None


def _block(name, array):
    dt = np.dtype(array.dtype).newbyteorder('<')
    if dt.kind == 'i':
        dt = np.dtype('<i8')
    if dt not in CODES:
        raise UnknownDtypeError('%s: cannot store dtype %s' %
                                (name, array.dtype))
    raw = name.encode('utf-8')
    data = np.ascontiguousarray(array, dtype=dt)
    return b''.join([
        struct.pack('<H', len(raw)), raw,
        struct.pack('<BB', CODES[dt], data.ndim),
        struct.pack('<%dI' % data.ndim, *data.shape),
        data.tobytes()])


def format_checkpoint(ck):
    config = ck.config.encode('utf-8')
    parts = [MAGIC, struct.pack('<Iq', VERSION, ck.seed), ck.digest,
             struct.pack('<I', len(config)), config]
    for group in ck.groups():
        parts.append(struct.pack('<I', len(group)))
        parts.extend(_block(k, v) for k, v in group.items())
    return b''.join(parts)


class _Reader(object):
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedError(self.pos, what)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse_checkpoint(data):
    '''
    >>> parse_checkpoint(MAGIC + struct.pack('<Iq', 9, 0))
    Traceback (most recent call last):
      ...
    itpcqa.checkpoint.VersionError: checkpoint version 9; expected 1
    '''
    r = _Reader(data)
    magic = r.take(4, 'magic')
    if magic != MAGIC:
        raise MagicError('bad magic %r; not a checkpoint' % magic)
    version, = r.unpack('<I', 'version')
    if version != VERSION:
        raise VersionError(version)
    seed, = r.unpack('<q', 'seed')
    digest = r.take(32, 'digest')
    n, = r.unpack('<I', 'config length')
    config = r.take(n, 'config').decode('utf-8')
    if config_digest(config) != digest:
        raise CheckpointFormatError('config digest does not match config')
    groups = []
    for label in ('tensors', 'optimizer', 'meta'):
        count, = r.unpack('<I', label + ' count')
        group = OrderedDict()
        for _ in range(count):
            ln, = r.unpack('<H', 'name length')
            name = r.take(ln, 'name').decode('utf-8')
            code, rank = r.unpack('<BB', name)
            if code not in DTYPES:
                raise UnknownDtypeError('%s: unknown dtype code %d' %
                                        (name, code))
            dims = r.unpack('<%dI' % rank, name)
            dt = DTYPES[code]
            size = int(np.prod(dims)) * dt.itemsize
            raw = r.take(size, name)
            group[name] = np.frombuffer(raw, dtype=dt).reshape(dims).copy()
        groups.append(group)
    return Checkpoint(seed, config, *groups)


def save_checkpoint(path, ck):
    path.write_bytes(format_checkpoint(ck))
    log.info('saved %s to %s', ck, path)


def load_checkpoint(path):
    ck = parse_checkpoint(path.read_bytes())
    log.info('loaded %s from %s', ck, path)
    return ck


def snapshot(nets, optimizer, seed, config, meta):
    '''Capture networks, optimizer state and meta arrays.
    '''
    tensors = [(n, t.data.copy()) for n, t in nets.named_tensors().items()]
    state = optimizer.state() if optimizer else {}
    return Checkpoint(seed, config, tensors, state, meta)


def restore(nets, ck, optimizer=None):
    '''Load parameters into `nets`, checking names, shapes and order.

    Raises ArchitectureMismatch naming the first tensor that differs.
    '''
    mine = nets.named_tensors()
    names = list(mine)
    theirs = list(ck.tensors)
    for i in range(max(len(names), len(theirs))):
        a = names[i] if i < len(names) else None
        b = theirs[i] if i < len(theirs) else None
        if a != b:
            raise ArchitectureMismatch(
                'architecture mismatch at tensor %s (checkpoint has %s)' %
                (a, b))
        if mine[a].shape != ck.tensors[b].shape:
            raise ArchitectureMismatch(
                'architecture mismatch at tensor %s: shape %s vs %s' %
                (a, mine[a].shape, ck.tensors[b].shape))
    for n, t in mine.items():
        t.data = ck.tensors[n].astype(t.data.dtype)
    if optimizer is not None and ck.optimizer:
        optimizer.load_state(ck.optimizer)
