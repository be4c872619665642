'''projection -- render point clouds onto the faces of their bounding cube
-------------------------------------------------------------------------

Each face is an orthographic view from outside the cube. A face's
image axes are `right` and `up`; right x up is the outward normal, so
no face is mirrored:

====  =====  ====
face  right  up
====  =====  ====
+x    +y     +z
-x    -y     +z
+y    -x     +z
-y    +x     +z
+z    +x     +y
-z    -x     +y
====  =====  ====

Pixel column grows with `right`, row grows against `up`; both map
[center - h, center + h] linearly onto [0, R) and are floor-rounded.
Per pixel, the point nearest the viewer wins; equal depths go to the
lowest point index.

  >>> from itpcqa.ply import PointCloud, bounding_cube
  >>> two = PointCloud([[0, 0, 0.2], [0, 0, 0.8], [1, 1, 0], [-1, -1, 1]],
  ...                  [[255, 0, 0], [0, 0, 255], [0, 0, 0], [0, 0, 0]])
  >>> cfg = ProjectionConfig(face_resolution=16, output_size=16)
  >>> img = render_face(two, bounding_cube(two), '+z', cfg)
  >>> img
  RasterImage(16x16)
  >>> img.pixels[8, 8].tolist()
  [0, 0, 255]

The six faces are spliced two rows by three columns, then resized::

  >>> six = render_multiperspective(two, cfg._replace(face_resolution=64,
  ...                                                  output_size=64))
  >>> six.width, six.height
  (64, 64)

'''

from collections import namedtuple
import logging
import re

import numpy as np

log = logging.getLogger(__name__)

FACES = ('+x', '+y', '+z', '-x', '-y', '-z')

# face: (normal axis, normal sign, (right axis, sign), (up axis, sign))
FRAMES = {
    '+x': (0, 1, (1, 1), (2, 1)),
    '-x': (0, -1, (1, -1), (2, 1)),
    '+y': (1, 1, (0, -1), (2, 1)),
    '-y': (1, -1, (0, 1), (2, 1)),
    '+z': (2, 1, (0, 1), (1, 1)),
    '-z': (2, -1, (0, -1), (1, 1)),
}
MODES = ('2d2', '2d1')


class RasterImage(object):
    '''Row-major (height, width, 3) uint8 pixels.
    '''
    def __init__(self, pixels):
        pixels = np.asarray(pixels, dtype=np.uint8)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError('expected (H, W, 3) pixels, got %s' %
                             (pixels.shape,))
        self.pixels = pixels

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def __repr__(self):
        return 'RasterImage(%dx%d)' % (self.width, self.height)

    def __eq__(self, other):
        return (isinstance(other, RasterImage) and
                np.array_equal(self.pixels, other.pixels))

    def __ne__(self, other):
        return not self == other

    __hash__ = None

    @classmethod
    def blank(cls, height, width, background):
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = background
        return cls(px)

    def as_chw(self):
        '''Network input layout: (3, H, W) floats in [0, 1].
        '''
        return self.pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


class ProjectionConfig(namedtuple('ProjectionConfig', [
        'face_resolution', 'mode', 'face', 'background', 'splat_radius',
        'output_size'])):
    '''
    >>> cfg = ProjectionConfig().check()
    >>> cfg.face_resolution, cfg.mode, cfg.background, cfg.output_size
    (512, '2d2', (255, 255, 255), 224)
    >>> ProjectionConfig(face_resolution=4).check()
    Traceback (most recent call last):
      ...
    ValueError: face_resolution must be >= 8, got 4
    '''
    def __new__(cls, face_resolution=512, mode='2d2', face='+z',
                background=(255, 255, 255), splat_radius=0,
                output_size=224):
        return super(ProjectionConfig, cls).__new__(
            cls, face_resolution, mode, face, tuple(background),
            splat_radius, output_size)

    def check(self):
        if self.face_resolution < 8:
            raise ValueError('face_resolution must be >= 8, got %s' %
                             self.face_resolution)
        if self.output_size < 16:
            raise ValueError('output_size must be >= 16, got %s' %
                             self.output_size)
        if self.mode not in MODES:
            raise ValueError('unknown projection mode: %s' % self.mode)
        if self.face not in FRAMES:
            raise ValueError('unknown face: %s' % self.face)
        if self.splat_radius < 0:
            raise ValueError('splat_radius must be >= 0')
        if (len(self.background) != 3 or
                not all(0 <= c <= 255 for c in self.background)):
            raise ValueError('bad background: %s' % (self.background,))
        return self


def face_coordinates(points, cube, face, resolution):
    '''Per-point (row, col, depth) on one face of `cube`.
    '''
    axis, sign, (ra, rs), (ua, us) = FRAMES[face]
    c = np.asarray(cube.center, dtype=np.float64)
    h = cube.half_extent
    d = points - c
    right = rs * d[:, ra]
    up = us * d[:, ua]
    col = np.floor((right + h) / (2 * h) * resolution).astype(np.int64)
    row = np.floor((h - up) / (2 * h) * resolution).astype(np.int64)
    np.clip(col, 0, resolution - 1, out=col)
    np.clip(row, 0, resolution - 1, out=row)
    depth = h - sign * d[:, axis]
    return row, col, depth


def _disc(radius):
    r = int(radius)
    dr, dc = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dr * dr + dc * dc <= radius * radius
    return dr[keep], dc[keep]


def render_face(cloud, cube, face, config):
    R = config.face_resolution
    row, col, depth = face_coordinates(cloud.points, cube, face, R)
    index = np.arange(len(cloud))
    if config.splat_radius > 0:
        dr, dc = _disc(config.splat_radius)
        row = (row[:, None] + dr[None, :]).ravel()
        col = (col[:, None] + dc[None, :]).ravel()
        k = len(dr)
        depth = np.repeat(depth, k)
        index = np.repeat(index, k)
        inside = (row >= 0) & (row < R) & (col >= 0) & (col < R)
        row, col, depth, index = (row[inside], col[inside], depth[inside],
                                  index[inside])
    pixel = row * R + col
    order = np.lexsort((index, depth, pixel))
    pixel, index = pixel[order], index[order]
    first = np.ones(len(pixel), dtype=bool)
    first[1:] = pixel[1:] != pixel[:-1]
    out = RasterImage.blank(R, R, config.background)
    flat = out.pixels.reshape(R * R, 3)
    flat[pixel[first]] = cloud.colors[index[first]]
    return out


def splice(faces):
    '''Two rows by three: [+x, +y, +z] over [-x, -y, -z].
    '''
    top = np.concatenate([faces[f].pixels for f in FACES[:3]], axis=1)
    bottom = np.concatenate([faces[f].pixels for f in FACES[3:]], axis=1)
    return RasterImage(np.concatenate([top, bottom], axis=0))


def render_faces(cloud, config):
    from .ply import bounding_cube
    cube = bounding_cube(cloud)
    return dict((f, render_face(cloud, cube, f, config)) for f in FACES)


def render_multiperspective(cloud, config, faces=None):
    if config.mode != '2d2':
        raise ValueError('render_multiperspective needs mode 2d2, got %s'
                         % config.mode)
    faces = faces or render_faces(cloud, config)
    S = config.output_size
    return resize_bilinear(splice(faces), S, S)


def project(cloud, config):
    '''Network-ready image of `cloud` in either projection mode.
    '''
    config.check()
    if config.mode == '2d2':
        return render_multiperspective(cloud, config)
    from .ply import bounding_cube
    face = render_face(cloud, bounding_cube(cloud), config.face, config)
    S = config.output_size
    return resize_bilinear(face, S, S)


def _axis_weights(n_in, n_out):
    scale = n_in / float(n_out)
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(image, height, width=None):
    '''Bilinear resize with half-pixel centers, rounding half up.

    >>> checker = RasterImage(np.array([[[0] * 3, [255] * 3],
    ...                                 [[255] * 3, [0] * 3]]))
    >>> resize_bilinear(checker, 1).pixels.tolist()
    [[[128, 128, 128]]]
    >>> resize_bilinear(checker, 2) == checker
    True
    '''
    width = height if width is None else width
    if height < 1 or width < 1:
        raise ValueError('resize target must be >= 1, got %dx%d' %
                         (width, height))
    px = image.pixels.astype(np.float64)
    r0, r1, rw = _axis_weights(image.height, height)
    c0, c1, cw = _axis_weights(image.width, width)
    rows = px[r0] + rw[:, None, None] * (px[r1] - px[r0])
    out = (rows[:, c0] + cw[None, :, None] * (rows[:, c1] - rows[:, c0]))
    return RasterImage(np.clip(np.floor(out + 0.5), 0, 255))


def format_ppm(image):
    '''Binary PPM (P6), maxval 255.

    >>> format_ppm(RasterImage(np.zeros((1, 2, 3))))
    b'P6\\n2 1\\n255\\n\\x00\\x00\\x00\\x00\\x00\\x00'
    '''
    head = b'P6\n%d %d\n255\n' % (image.width, image.height)
    return head + np.ascontiguousarray(image.pixels).tobytes()


_PPM_TOKEN = re.compile(br'(?:\s|#[^\n]*\n)*(\S+)')


def parse_ppm(data, name='<bytes>'):
    '''
    >>> img = parse_ppm(b'P6\\n# comment\\n1 1\\n255\\n\\x01\\x02\\x03')
    >>> img.pixels.tolist()
    [[[1, 2, 3]]]
    >>> parse_ppm(b'P3\\n1 1\\n255\\n1 2 3')
    Traceback (most recent call last):
      ...
    ValueError: <bytes>: not a binary PPM (P6)
    '''
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PPM_TOKEN.match(data, pos)
        if not m:
            raise ValueError('%s: truncated PPM header' % name)
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b'P6':
        raise ValueError('%s: not a binary PPM (P6)' % name)
    width, height, maxval = [int(t) for t in tokens[1:]]
    if maxval != 255:
        raise ValueError('%s: maxval %d not supported' % (name, maxval))
    pos += 1
    need = width * height * 3
    if len(data) - pos < need:
        raise ValueError('%s: truncated PPM data at byte offset %d' %
                         (name, len(data)))
    px = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return RasterImage(px.reshape(height, width, 3).copy())


def read_ppm(path):
    return parse_ppm(path.read_bytes(), str(path))


def write_ppm(path, image):
    path.write_bytes(format_ppm(image))
    log.debug('wrote %s to %s', image, path)
