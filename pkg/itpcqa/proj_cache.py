'''proj_cache -- content-addressed cache of projected point clouds
-----------------------------------------------------------------

Keys are the sha256 of the projection config's canonical text and the
raw PLY bytes, so distinct clouds or configs never share an entry and
identical ones always hit.

  >>> from itpcqa.projection import ProjectionConfig
  >>> cache = ProjectionCache()
  >>> calls = []
  >>> def render():
  ...     calls.append(1)
  ...     return 'image'
  >>> cfg = ProjectionConfig(face_resolution=8, output_size=16)
  >>> cache.get(b'ply-bytes', cfg, render, 'c1')
  'image'
  >>> cache.get(b'ply-bytes', cfg, render, 'c1')
  'image'
  >>> len(calls), cache.hits, cache.misses
  (1, 1, 1)

'''

import hashlib
import logging
import threading

from .projection import read_ppm, write_ppm

log = logging.getLogger(__name__)


def format_value(v):
    '''
    >>> format_value((255, 255, 255)), format_value(1e-4), format_value(16)
    ('255,255,255', '0.0001', '16')
    '''
    if isinstance(v, tuple):
        return ','.join(str(c) for c in v)
    return repr(v) if isinstance(v, float) else str(v)


def section_text(section, config):
    '''Sorted `section.key = value` lines of a config namedtuple.
    '''
    return '\n'.join('%s.%s = %s' % (section, k, format_value(v))
                     for k, v in sorted(config._asdict().items()))


def projection_text(config):
    '''Canonical text of a projection config; part of every cache key.

    >>> from itpcqa.projection import ProjectionConfig
    >>> print(projection_text(ProjectionConfig()))
    projection.background = 255,255,255
    projection.face = +z
    projection.face_resolution = 512
    projection.mode = 2d2
    projection.output_size = 224
    projection.splat_radius = 0
    '''
    return section_text('projection', config)


def cache_key(ply_bytes, config):
    h = hashlib.sha256(projection_text(config).encode('utf-8'))
    h.update(b'\0')
    h.update(ply_bytes)
    return h.hexdigest()


class ProjectionCache(object):
    '''Memoize renders in memory, and on disk under `root` when given.

    Disk entries live at `root/<k[:2]>/<k>.ppm`.
    '''
    def __init__(self, root=None):
        self._root = root
        self._mem = {}
        self._lock = threading.Lock()
        self.hits = self.misses = 0
        log.info('%s initialized at %s', self.__class__.__name__,
                 root or '<memory>')

    def _path(self, k):
        return self._root / k[:2] / (k + '.ppm')

    def get(self, ply_bytes, config, thunk, label=None):
        k = cache_key(ply_bytes, config)
        with self._lock:
            if k in self._mem:
                self.hits += 1
                return self._mem[k]
        if self._root is not None and self._path(k).exists():
            v = read_ppm(self._path(k))
            with self._lock:
                self.hits += 1
                self._mem[k] = v
            return v

        log.info('%s projection for %s', label, k[:12])
        v = thunk()
        if self._root is not None:
            self._path(k).parent.mkdir(parents=True, exist_ok=True)
            write_ppm(self._path(k), v)
        with self._lock:
            self.misses += 1
            self._mem[k] = v
        return v
