'''ply -- colored point clouds in PLY format
-------------------------------------------

Supported subset: `format ascii 1.0` and `format binary_little_endian
1.0`, one `vertex` element with float `x`, `y`, `z` and uchar `red`,
`green`, `blue`. Other vertex properties are skipped; other elements
are ignored.

  >>> c = parse_ply(b"""ply
  ... format ascii 1.0
  ... element vertex 1
  ... property float x
  ... property float y
  ... property float z
  ... property uchar red
  ... property uchar green
  ... property uchar blue
  ... end_header
  ... 0 0 0 255 0 0
  ... """)
  >>> c
  PointCloud(1 points)
  >>> c.points.tolist(), c.colors.tolist()
  ([[0.0, 0.0, 0.0]], [[255, 0, 0]])

Clouds without color get mid gray and a warning flag::

  >>> gray = parse_ply(b"""ply
  ... format ascii 1.0
  ... element vertex 1
  ... property double x
  ... property double y
  ... property double z
  ... end_header
  ... 1 2 3
  ... """)
  >>> gray.colors.tolist(), gray.warnings
  ([[128, 128, 128]], ('missing color',))

The summary cube pads the largest half-range by 5%::

  >>> bounding_cube(PointCloud([[0, 0, 0], [2, 0, 0]], [[0, 0, 0]] * 2))
  BoundingCube(center=(1.0, 0.0, 0.0), half_extent=1.05)

'''

from collections import namedtuple
import logging

import numpy as np

log = logging.getLogger(__name__)

CUBE_PAD = 0.05
MISSING_COLOR = 128

_TYPES = {
    'char': 'i1', 'int8': 'i1', 'uchar': 'u1', 'uint8': 'u1',
    'short': 'i2', 'int16': 'i2', 'ushort': 'u2', 'uint16': 'u2',
    'int': 'i4', 'int32': 'i4', 'uint': 'u4', 'uint32': 'u4',
    'float': 'f4', 'float32': 'f4', 'double': 'f8', 'float64': 'f8',
}
_COORDS = ('x', 'y', 'z')
_COLORS = ('red', 'green', 'blue')


class PlyFormatError(ValueError):
    pass


class PointCloud(object):
    '''Points (N, 3) float64 in file order with colors (N, 3) uint8.
    '''
    def __init__(self, points, colors, warnings=()):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.points) != len(self.colors):
            raise ValueError('%d points but %d colors' %
                             (len(self.points), len(self.colors)))
        self.warnings = tuple(warnings)

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return 'PointCloud(%d points)' % len(self)

    def __eq__(self, other):
        return (isinstance(other, PointCloud) and
                np.array_equal(self.points, other.points) and
                np.array_equal(self.colors, other.colors))

    def __ne__(self, other):
        return not self == other

    __hash__ = None

    def take(self, index):
        return PointCloud(self.points[index], self.colors[index])


class BoundingCube(namedtuple('BoundingCube', ['center', 'half_extent'])):
    def contains(self, points):
        lo = np.asarray(self.center) - self.half_extent
        hi = np.asarray(self.center) + self.half_extent
        return bool(((points >= lo) & (points <= hi)).all())

    @property
    def diagonal(self):
        return 2 * self.half_extent * np.sqrt(3.0)


def bounding_cube(cloud, pad=CUBE_PAD):
    '''
    >>> bounding_cube(PointCloud([[5, 5, 5]], [[0, 0, 0]]))
    BoundingCube(center=(5.0, 5.0, 5.0), half_extent=1.0)
    >>> import itertools
    >>> corners = list(itertools.product((-1, 1), repeat=3))
    >>> bounding_cube(PointCloud(corners, [[0, 0, 0]] * 8))
    BoundingCube(center=(0.0, 0.0, 0.0), half_extent=1.05)
    '''
    if not len(cloud):
        raise ValueError('bounding_cube: empty cloud')
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    center = tuple(float(c) for c in (lo + hi) / 2)
    half = float((hi - lo).max()) / 2
    if half == 0:
        return BoundingCube(center, 1.0)
    return BoundingCube(center, round(half * (1 + pad), 12))


def _header(data):
    end = data.find(b'end_header')
    if end < 0 or not data.startswith(b'ply'):
        raise PlyFormatError('not a PLY file (no ply/end_header)')
    body = data.index(b'\n', end) + 1
    lines = data[:end].decode('ascii').splitlines()
    fmt = None
    elements = []
    for line in lines[1:]:
        words = line.split()
        if not words or words[0] in ('comment', 'obj_info'):
            continue
        if words[0] == 'format':
            fmt = words[1]
        elif words[0] == 'element':
            elements.append((words[1], int(words[2]), []))
        elif words[0] == 'property':
            if not elements:
                raise PlyFormatError('property before element: %s' % line)
            if words[1] == 'list':
                elements[-1][2].append((words[4], ('list', words[2],
                                                   words[3])))
            else:
                if words[1] not in _TYPES:
                    raise PlyFormatError('unknown property type: %s' %
                                         words[1])
                elements[-1][2].append((words[2], _TYPES[words[1]]))
    if fmt not in ('ascii', 'binary_little_endian'):
        raise PlyFormatError('unsupported format: %s' % fmt)
    return fmt, elements, body


def parse_ply(data, name='<bytes>'):
    '''Parse PLY `data` (bytes) into a :class:`PointCloud`.

    >>> parse_ply(b"""ply
    ... format ascii 1.0
    ... element vertex 2
    ... property float x
    ... property float z
    ... end_header
    ... 0 0
    ... 1 1
    ... """)
    Traceback (most recent call last):
      ...
    itpcqa.ply.PlyFormatError: <bytes>: missing coordinate property y
    '''
    fmt, elements, body = _header(data)
    vertex = [e for e in elements if e[0] == 'vertex']
    if not vertex:
        raise PlyFormatError('%s: no vertex element' % name)
    props = vertex[0][2]
    names = [p for p, _ in props]
    for axis in _COORDS:
        if axis not in names:
            raise PlyFormatError('%s: missing coordinate property %s' %
                                 (name, axis))
    count = vertex[0][1]
    if fmt == 'ascii':
        points, colors = _ascii_vertices(data, body, props, count, name)
    else:
        points, colors = _binary_vertices(data, body, elements, name)
    bad = ~np.isfinite(points).all(axis=1)
    if bad.any():
        raise PlyFormatError('%s: non-finite coordinate at vertex %d' %
                             (name, int(np.argmax(bad)) + 1))
    warnings = ()
    if colors is None:
        log.warning('%s: no vertex colors; using gray', name)
        colors = np.full((count, 3), MISSING_COLOR, dtype=np.uint8)
        warnings = ('missing color',)
    return PointCloud(points, colors, warnings)


def _ascii_vertices(data, offset, props, count, name):
    # vertex rows are assumed to come first, before any other element
    names = [p for p, _ in props]
    rows = []
    for line in data[offset:].splitlines(keepends=True):
        if len(rows) == count:
            break
        fields = line.split()
        if fields:
            where = '%s: vertex %d of %d (byte offset %d)' % (
                name, len(rows) + 1, count, offset)
            if len(fields) < len(names):
                raise PlyFormatError('%s has %d of %d values' %
                                     (where, len(fields), len(names)))
            try:
                rows.append([float(f) for f in fields[:len(names)]])
            except ValueError:
                raise PlyFormatError('%s is not numeric' % where)
        offset += len(line)
    if len(rows) < count:
        raise PlyFormatError('%s: truncated at vertex %d of %d '
                             '(byte offset %d)' %
                             (name, len(rows) + 1, count, offset))
    table = np.array(rows, dtype=np.float64).reshape(count, len(names))
    points = table[:, [names.index(a) for a in _COORDS]]
    colors = None
    if all(c in names for c in _COLORS):
        colors = table[:, [names.index(c) for c in _COLORS]].astype(np.uint8)
    return points, colors


def _binary_vertices(data, offset, elements, name):
    for elt, count, props in elements:
        if any(isinstance(t, tuple) for _, t in props):
            if elt == 'vertex':
                raise PlyFormatError('%s: list property in vertex' % name)
            # list-bearing elements after the vertices are ignored
            break
        dtype = np.dtype([(p, '<' + t) for p, t in props])
        if elt != 'vertex':
            offset += dtype.itemsize * count
            continue
        need = dtype.itemsize * count
        if len(data) - offset < need:
            got = (len(data) - offset) // dtype.itemsize
            raise PlyFormatError(
                '%s: truncated at vertex %d of %d (byte offset %d)' %
                (name, got + 1, count, offset + got * dtype.itemsize))
        table = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        points = np.stack([table[a].astype(np.float64) for a in _COORDS],
                          axis=1)
        colors = None
        if all(c in dtype.names for c in _COLORS):
            colors = np.stack([table[c] for c in _COLORS],
                              axis=1).astype(np.uint8)
        return points, colors
    raise PlyFormatError('%s: no readable vertex element' % name)


def read_ply(path):
    '''Read a cloud from a `pathlib.Path`.
    '''
    cloud = parse_ply(path.read_bytes(), str(path))
    log.info('read %d points from %s', len(cloud), path)
    return cloud


def format_ply(cloud, ascii=False):
    '''Serialize; binary output stores float32 coordinates and uchar colors.

    >>> print(format_ply(PointCloud([[0.5, 1, 2]], [[1, 2, 3]]),
    ...                  ascii=True).decode('ascii'))
    ... # doctest: +NORMALIZE_WHITESPACE
    ply
    format ascii 1.0
    element vertex 1
    property float x
    property float y
    property float z
    property uchar red
    property uchar green
    property uchar blue
    end_header
    0.5 1 2 1 2 3
    '''
    head = '\n'.join(
        ['ply', 'format %s 1.0' % ('ascii' if ascii else
                                   'binary_little_endian'),
         'element vertex %d' % len(cloud)] +
        ['property float %s' % a for a in _COORDS] +
        ['property uchar %s' % c for c in _COLORS] +
        ['end_header', '']).encode('ascii')
    xyz = cloud.points.astype(np.float32)
    if ascii:
        rows = ['%s %s %s %d %d %d' % (
            _g(p[0]), _g(p[1]), _g(p[2]), c[0], c[1], c[2])
            for p, c in zip(xyz, cloud.colors)]
        return head + ''.join(r + '\n' for r in rows).encode('ascii')
    table = np.empty(len(cloud), dtype=[('x', '<f4'), ('y', '<f4'),
                                        ('z', '<f4'), ('red', 'u1'),
                                        ('green', 'u1'), ('blue', 'u1')])
    for i, a in enumerate(_COORDS):
        table[a] = xyz[:, i]
    for i, c in enumerate(_COLORS):
        table[c] = cloud.colors[:, i]
    return head + table.tobytes()


def _g(v):
    # shortest repr that round-trips a float32
    return np.format_float_positional(np.float32(v), trim='-')


def write_ply(path, cloud, ascii=False):
    path.write_bytes(format_ply(cloud, ascii=ascii))
    log.info('wrote %d points to %s', len(cloud), path)
