'''rtconfig -- run configuration and dependency injection
-------------------------------------------------------

A run is configured by `section.key = value` lines; every knob of
:class:`TrainConfig`, :class:`~itpcqa.projection.ProjectionConfig` and
:class:`~itpcqa.losses.LossConfig` has a key, and omitted keys keep
their defaults::

  >>> cfg = RunConfig.parse("""
  ... train.seed = 7
  ... # desk scale
  ... train.input_size = 64
  ... loss.mu1 = 0
  ... """)
  >>> cfg.train.seed, cfg.train.input_size, cfg.loss.mu1
  (7, 64, 0.0)

The canonical text lists every key, sorted, and parsing it gives the
same config back::

  >>> print(cfg.text().splitlines()[-3])
  train.precision = float32
  >>> RunConfig.parse(cfg.text()).text() == cfg.text()
  True

Typos are refused rather than ignored::

  >>> RunConfig.parse('train.sed = 7')
  Traceback (most recent call last):
    ...
  itpcqa.rtconfig.UsageError: unknown config key: train.sed

To instantiate classes based on a run configuration using injector__,
use :meth:`RunTime.make`:

__ http://pypi.python.org/pypi/injector/

  >>> logged = _printLogs()
  >>> cache, threads = RunTime.make([ProjectionCache, Threads],
  ...                               config=cfg)
  >>> print(logged())
  INFO:proj_cache:ProjectionCache initialized at <memory>
  >>> threads
  1

'''

from collections import OrderedDict, namedtuple
import configparser
import hashlib
import logging
from typing import NewType

import injector
from injector import provider, singleton

from .losses import LossConfig, VARIANTS
from .models import ENCODERS
from .proj_cache import ProjectionCache, section_text
from .projection import ProjectionConfig
from .tensor import DTYPES

log = logging.getLogger(__name__)

Threads = NewType('Threads', int)


class UsageError(ValueError):
    pass


class TrainConfig(namedtuple('TrainConfig', [
        'batch_size', 'input_size', 'epochs', 'learning_rate',
        'reversal_lambda', 'loss_variant', 'encoder', 'seed',
        'precision'])):
    '''
    >>> TrainConfig(batch_size=2).check()
    Traceback (most recent call last):
      ...
    ValueError: batch_size must be >= 4, got 2
    '''
    def __new__(cls, batch_size=16, input_size=224, epochs=30,
                learning_rate=1e-4, reversal_lambda=1.0, loss_variant='ALL',
                encoder='HSCNN', seed=0, precision='float32'):
        return super(TrainConfig, cls).__new__(
            cls, batch_size, input_size, epochs, learning_rate,
            reversal_lambda, loss_variant, encoder, seed, precision)

    def check(self):
        if self.batch_size < 4:
            raise ValueError('batch_size must be >= 4, got %s' %
                             self.batch_size)
        if self.input_size < 32:
            raise ValueError('input_size must be >= 32, got %s' %
                             self.input_size)
        if self.epochs < 1:
            raise ValueError('epochs must be >= 1')
        if not self.learning_rate > 0:
            raise ValueError('learning_rate must be > 0')
        if self.reversal_lambda < 0:
            raise ValueError('reversal_lambda must be >= 0')
        if self.loss_variant not in VARIANTS:
            raise ValueError('unknown loss variant: %s' % self.loss_variant)
        if self.encoder not in ENCODERS:
            raise ValueError('unknown encoder: %s' % self.encoder)
        if self.seed < 0:
            raise ValueError('seed must be >= 0')
        if self.precision not in DTYPES:
            raise ValueError('unknown precision: %s' % self.precision)
        return self


SECTIONS = OrderedDict([('loss', LossConfig),
                        ('projection', ProjectionConfig),
                        ('train', TrainConfig)])


def _convert(default, text, key):
    try:
        if isinstance(default, tuple):
            return tuple(int(c) for c in text.split(','))
        if isinstance(default, float):
            return float(text)
        if isinstance(default, int):
            return int(text)
    except ValueError:
        raise UsageError('bad value for %s: %r' % (key, text))
    return text.strip()


class RunConfig(namedtuple('RunConfig', list(SECTIONS))):
    def __new__(cls, loss=None, projection=None, train=None):
        return super(RunConfig, cls).__new__(
            cls, loss or LossConfig(), projection or ProjectionConfig(),
            train or TrainConfig())

    @classmethod
    def parse(cls, text, name='<config>'):
        p = configparser.ConfigParser(delimiters=('=',),
                                      comment_prefixes=('#', ';'),
                                      interpolation=None)
        p.optionxform = str
        try:
            p.read_string('[run]\n' + text, name)
        except configparser.Error as oops:
            raise UsageError('%s: %s' % (name, oops))
        cfg = cls()
        for key, value in p.items('run'):
            cfg = cfg.override(key, value)
        return cfg

    @classmethod
    def read(cls, path):
        return cls.parse(path.read_text(), str(path))

    def override(self, key, text):
        '''Replace one knob, given as text.

        >>> RunConfig().override('projection.mode', '2d1').projection.mode
        '2d1'
        '''
        section, _, field = key.partition('.')
        if section not in SECTIONS or field not in SECTIONS[section]._fields:
            raise UsageError('unknown config key: %s' % key)
        default = getattr(SECTIONS[section](), field)
        value = _convert(default, text, key)
        current = getattr(self, section)
        return self._replace(**{section: current._replace(**{field: value})})

    def check(self):
        for section in SECTIONS:
            try:
                getattr(self, section).check()
            except ValueError as oops:
                raise UsageError('%s: %s' % (section, oops))
        return self

    def text(self):
        return '\n'.join(section_text(s, getattr(self, s))
                         for s in SECTIONS) + '\n'

    def digest(self, section):
        return hashlib.sha256(
            section_text(section, getattr(self, section)).encode('utf-8')
        ).hexdigest()

    @property
    def network_projection(self):
        '''Projection settings as the networks see them: renders come out
        at the training input size.
        '''
        return self.projection._replace(output_size=self.train.input_size)


class _Maker(object):
    @classmethod
    def make(cls, what, **kwargs):
        '''Instantiate each class in `what` by dependency injection.

        :param what: list of classes (or other binding keys),
                     or None to get the injector itself.
        '''
        modules = cls.mods(**kwargs)
        depgraph = injector.Injector(modules)
        made = []
        for it in what:
            try:
                made.append(depgraph.get(it) if it else depgraph)
            except TypeError as oops:
                raise TypeError('failed (%s) to instantiate: %s w.r.t. \n%s'
                                % (oops, it,
                                   '\n'.join([str(m) for m in modules])))
        return made


class RunTime(injector.Module, _Maker):
    '''Bind a run configuration and its shared resources.
    '''
    def __init__(self, config, cache_root=None, threads=1):
        injector.Module.__init__(self)
        self.__config = config.check()
        self.__cache_root = cache_root
        self.__threads = threads
        self.label = '%s(seed=%d, threads=%d)' % (
            self.__class__.__name__, config.train.seed, threads)

    def __repr__(self):
        return self.label

    @provider
    def run_config(self) -> RunConfig:
        return self.__config

    @provider
    def train_config(self) -> TrainConfig:
        return self.__config.train

    @provider
    def projection_config(self) -> ProjectionConfig:
        return self.__config.network_projection

    @provider
    def loss_config(self) -> LossConfig:
        return self.__config.loss

    @provider
    def threads(self) -> Threads:
        return Threads(self.__threads)

    @singleton
    @provider
    def cache(self) -> ProjectionCache:
        return ProjectionCache(self.__cache_root)

    @classmethod
    def mods(cls, config, cache_root=None, threads=1):
        return [cls(config, cache_root, threads)]


def threads_from(environ):
    '''Worker count from `ITPCQA_THREADS`; 1 when unset.

    >>> threads_from({}), threads_from({'ITPCQA_THREADS': '4'})
    (1, 4)
    >>> threads_from({'ITPCQA_THREADS': '0'})
    Traceback (most recent call last):
      ...
    itpcqa.rtconfig.UsageError: ITPCQA_THREADS must be >= 1, got '0'
    '''
    text = environ.get('ITPCQA_THREADS', '1')
    try:
        n = int(text)
    except ValueError:
        n = 0
    if n < 1:
        raise UsageError('ITPCQA_THREADS must be >= 1, got %r' % text)
    return n


def _printLogs(level=logging.INFO):
    buf = []

    class DoctestHandler(logging.Handler):
        def emit(self, record):
            buf.append(self.format(record))

    class FileNameFormatter(logging.Formatter):
        """Only show module name, not path.
        """
        def format(self, record):
            record.name = record.name.split('.')[-1]
            return logging.Formatter.format(self, record)

    root = logging.Logger.root
    h = DoctestHandler()
    h.setFormatter(FileNameFormatter(logging.BASIC_FORMAT))
    root.setLevel(level)
    root.addHandler(h)

    def show():
        s = '\n'.join(buf)
        buf[:] = []
        return s

    return show
