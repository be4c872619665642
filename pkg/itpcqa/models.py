'''models -- feature generator G, mapper M, discriminator D, regressor R
-----------------------------------------------------------------------

G is a hierarchical shallow CNN: nine conv + batchnorm + relu blocks,
with the outputs of blocks 3, 5, 7 and 9 globally average-pooled to
64-vectors, concatenated, and fused by two 1x1 conv + relu stages into
an F = 128 feature. Pooling makes F independent of input size::

  >>> import numpy as np
  >>> from itpcqa.tensor import Tensor, no_grad
  >>> nets = Networks.build('HSCNN', seed=0)
  >>> x = Tensor(np.random.default_rng(0).random((2, 3, 64, 64)))
  >>> with no_grad():
  ...     feats, scores = forward_pipeline(nets, x, use_mapper=True)
  >>> feats.shape, scores.shape
  ((2, 128), (2,))

The single-tap variant pools block 9 only::

  >>> Networks.build('SCNN_SINGLE_TAP', seed=0).G
  SCNN(taps=(9,), F=128)

'''

from collections import OrderedDict
import logging

from .layers import (Conv2d, BatchNorm2d, Linear, relu, sigmoid,
                     global_avg_pool, concat)
from .tensor import ShapeError

log = logging.getLogger(__name__)

CHANNELS = (32, 32, 64, 64, 64, 64, 64, 64, 64)
STRIDES = (2, 1, 2, 1, 2, 1, 2, 1, 2)
TAPS = (3, 5, 7, 9)
FEATURES = 128
HEAD = 64
MIN_INPUT = 32
ENCODERS = {'HSCNN': TAPS, 'SCNN_SINGLE_TAP': (9,)}


class Module(object):
    '''A named stack of layers.
    '''
    def __init__(self, name, layers):
        self.name = name
        self.layers = layers

    def named_tensors(self):
        return [nt for layer in self.layers for nt in layer.named_tensors()]

    def train(self, mode=True):
        for layer in self.layers:
            layer.train(mode)


class SCNN(Module):
    def __init__(self, taps=TAPS, features=FEATURES, seed=0, name='G'):
        convs, norms = [], []
        c_in = 3
        for i, (c_out, s) in enumerate(zip(CHANNELS, STRIDES), 1):
            convs.append(Conv2d('%s.conv%d' % (name, i), c_in, c_out, 3,
                                stride=s, padding=1, seed=seed))
            norms.append(BatchNorm2d('%s.bn%d' % (name, i), c_out))
            c_in = c_out
        width = sum(CHANNELS[t - 1] for t in taps)
        self.fuse = [Conv2d('%s.fuse1' % name, width, features, 1, seed=seed),
                     Conv2d('%s.fuse2' % name, features, features, 1,
                            seed=seed)]
        Module.__init__(self, name,
                        [x for pair in zip(convs, norms) for x in pair] +
                        self.fuse)
        self.convs, self.norms = convs, norms
        self.taps, self.features = tuple(taps), features

    def __repr__(self):
        return 'SCNN(taps=%s, F=%d)' % (self.taps, self.features)

    def __call__(self, images):
        '''(N, 3, S, S) pixels in [0, 1] -> (N, F)
        '''
        N, _, H, W = images.shape
        if min(H, W) < MIN_INPUT:
            raise ShapeError('input side must be >= %d, got %dx%d' %
                             (MIN_INPUT, H, W))
        pooled = []
        h = images
        for i, (conv, norm) in enumerate(zip(self.convs, self.norms), 1):
            h = relu(norm(conv(h)))
            if i in self.taps:
                pooled.append(global_avg_pool(h))
        v = concat(pooled, axis=1) if len(pooled) > 1 else pooled[0]
        v = v.reshape(N, v.shape[1], 1, 1)
        for conv in self.fuse:
            v = relu(conv(v))
        return v.reshape(N, self.features)


class Mapper(Module):
    def __init__(self, features=FEATURES, seed=0, name='M'):
        self.fc = [Linear(name + '.fc1', features, features, seed=seed),
                   Linear(name + '.fc2', features, features, seed=seed)]
        Module.__init__(self, name, self.fc)

    def __call__(self, feats):
        for fc in self.fc:
            feats = relu(fc(feats))
        return feats


class _Head(Module):
    def __init__(self, name, features, seed):
        self.fc1 = Linear(name + '.fc1', features, HEAD, seed=seed)
        self.fc2 = Linear(name + '.fc2', HEAD, 1, seed=seed)
        Module.__init__(self, name, [self.fc1, self.fc2])

    def logits(self, feats):
        out = self.fc2(relu(self.fc1(feats)))
        return out.reshape(out.shape[0])


class Discriminator(_Head):
    '''Probability in (0, 1) that a feature came from the source domain.
    '''
    def __init__(self, features=FEATURES, seed=0, name='D'):
        _Head.__init__(self, name, features, seed)

    def __call__(self, feats):
        return sigmoid(self.logits(feats))


class Regressor(_Head):
    def __init__(self, features=FEATURES, seed=0, name='R'):
        _Head.__init__(self, name, features, seed)

    __call__ = _Head.logits


class Networks(object):
    '''G, M, D and R with one shared feature width.
    '''
    def __init__(self, G, M, D, R, encoder):
        self.G, self.M, self.D, self.R = G, M, D, R
        self.encoder = encoder

    @classmethod
    def build(cls, encoder='HSCNN', seed=0, features=FEATURES):
        if encoder not in ENCODERS:
            raise ValueError('unknown encoder: %s' % encoder)
        log.debug('building %s networks, seed %d', encoder, seed)
        return cls(SCNN(ENCODERS[encoder], features, seed),
                   Mapper(features, seed), Discriminator(features, seed),
                   Regressor(features, seed), encoder)

    def modules(self):
        return [self.G, self.M, self.D, self.R]

    def named_tensors(self):
        return OrderedDict(nt for m in self.modules()
                           for nt in m.named_tensors())

    def parameters(self):
        return [(n, t) for n, t in self.named_tensors().items()
                if t.requires_grad]

    def train(self, mode=True):
        for m in self.modules():
            m.train(mode)


def forward_pipeline(nets, images, use_mapper, g_features=None):
    '''Scores R(M(G(x))) or R(G(x)); pass `g_features` to reuse G(x).
    '''
    g = nets.G(images) if g_features is None else g_features
    feats = nets.M(g) if use_mapper else g
    return feats, nets.R(feats)
