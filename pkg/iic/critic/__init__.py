"""
Autoregressive critic models, token information content, and
  entropy-targeted temperature scaling.

All logarithms are natural: IC and entropy are in nats.
"""
import hashlib
import logging
from collections import namedtuple

import numpy as np
import scipy.special
import scipy.stats

from iic import IICError
from iic import DomainError
from iic.BinaryParser import ParseException
from iic.tokenizer import VOCAB_SIZE
from iic.tokenizer import CODEBOOK_SIZES
from iic.tokenizer import TokenType


g_logger = logging.getLogger("iic.critic")

R_MIN = 1e-3
R_MAX = 1e3
ENTROPY_TOLERANCE = 1e-3
MAX_BISECTION_STEPS = 60


class CorpusError(IICError):
    pass


class ModelFormatError(ParseException):
    """
    A model file failed validation.
    """
    def __repr__(self):
        return "ModelFormatError(%r)" % (self._value)

    def __str__(self):
        return "Model Format Error(%s)" % (self._value)


class CriticModel(object):
    """
    interface

    A model that gives the distribution of the next token over the whole
      vocabulary given a prefix. `next_dist` must be deterministic and
      thread-safe, and every token the cycle allows must get nonzero mass.
    """
    @property
    def vocab_size(self):
        raise NotImplementedError()

    @property
    def type_mask(self):
        """
        True if distributions only cover the type forced at each position.
        """
        return False

    def next_dist(self, prefix):
        """
        @type prefix: TokenSeq or sequence of token ids
        @rtype: read-only numpy array of length `vocab_size`
        """
        raise NotImplementedError()

    def metadata(self):
        return {}

    def to_bytes(self):
        raise NotImplementedError()


TemperatureMatch = namedtuple("TemperatureMatch", ["r", "entropy", "unreached"])


def token_ic(model, seq):
    """
    IC of every token given all tokens before it.

    @rtype: numpy array of nats, aligned with `seq`
    """
    ids = tuple(getattr(seq, "ids", seq))
    if not ids:
        raise DomainError("cannot score an empty sequence")
    ics = np.empty(len(ids))
    for i, token in enumerate(ids):
        ics[i] = -np.log(model.next_dist(ids[:i])[token])
    return ics


def corpus_ic(model, corpus):
    """
    @return: one IC vector per sequence in `corpus`
    """
    return [token_ic(model, seq) for seq in corpus]


def entropy(d):
    return float(scipy.stats.entropy(d))


def apply_temperature(d, r):
    """
    Rescale the log-probabilities of `d` by 1/r and renormalize. Tokens
      with zero probability stay at zero.

    @raise DomainError: if r is not positive.
    """
    if not r > 0:
        raise DomainError("temperature must be positive: %r" % r)
    d = np.asarray(d, dtype=np.float64)
    if r == 1:
        return d.copy()
    out = np.zeros_like(d)
    support = d > 0
    out[support] = scipy.special.softmax(np.log(d[support]) / r)
    return out


def type_entropy_ceiling(ttype):
    """
    Entropy of the uniform distribution over one token type's codebook.
    """
    return float(np.log(CODEBOOK_SIZES[TokenType(ttype)]))


def target_entropy(ic_star, c_h, h_max=None):
    """
    The entropy to impose on the generator for a target IIC value.

    @param h_max: ceiling; defaults to the uniform entropy over the full
      vocabulary.
    """
    if not c_h > 0:
        raise DomainError("entropy constant must be positive: %r" % c_h)
    if h_max is None:
        h_max = np.log(VOCAB_SIZE)
    return float(min(max(ic_star / c_h, 0.0), h_max))


def match_entropy(d, h_target, tol=ENTROPY_TOLERANCE, r_min=R_MIN, r_max=R_MAX,
                  max_steps=MAX_BISECTION_STEPS):
    """
    Find a temperature r such that apply_temperature(d, r) has entropy
      within `tol` of `h_target`, by bisection over log r.

    Entropy is non-decreasing in r, bounded by the log of the support
      size. When the target lies outside what [r_min, r_max] reaches, the
      nearer end is returned flagged `unreached`.

    @rtype: TemperatureMatch
    """
    if h_target < 0:
        raise DomainError("target entropy must be non-negative: %r" % h_target)
    if not tol > 0:
        raise DomainError("tolerance must be positive: %r" % tol)
    d = np.asarray(d, dtype=np.float64)

    h = entropy(d)
    if abs(h - h_target) <= tol:
        return TemperatureMatch(1.0, h, False)

    if np.count_nonzero(d) <= 1:
        # temperature cannot create support
        return TemperatureMatch(r_max, 0.0, h_target > tol)

    h_hi = entropy(apply_temperature(d, r_max))
    if h_target > h_hi:
        return TemperatureMatch(r_max, h_hi, True)
    h_lo = entropy(apply_temperature(d, r_min))
    if h_target < h_lo:
        return TemperatureMatch(r_min, h_lo, True)

    lo, hi = np.log(r_min), np.log(r_max)
    best = (np.inf, 1.0, h)
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        r = float(np.exp(mid))
        h = entropy(apply_temperature(d, r))
        if abs(h - h_target) < best[0]:
            best = (abs(h - h_target), r, h)
        if abs(h - h_target) <= tol:
            break
        if h < h_target:
            lo = mid
        else:
            hi = mid
    return TemperatureMatch(best[1], best[2], best[0] > tol)


def sample(d, rng):
    """
    Draw one token id from `d` by inverting the cumulative distribution.

    @type rng: numpy.random.Generator
    """
    cdf = np.cumsum(d)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if idx >= len(cdf) or d[idx] == 0:
        idx = int(np.flatnonzero(d)[-1])
    return idx


def model_hash(model):
    """
    SHA-256 of the serialized model, as a hex string.
    """
    return hashlib.sha256(model.to_bytes()).hexdigest()


def save_model(model, path):
    with open(path, "wb") as f:
        f.write(model.to_bytes())


def load_model(path, cache_size=None):
    """
    @param cache_size: distributions the model keeps cached; None for
      the default.
    @rtype: MarkovCritic
    @raise ModelFormatError:
    """
    with open(path, "rb") as f:
        buf = f.read()
    if cache_size is None:
        return MarkovCritic.from_bytes(buf)
    return MarkovCritic.from_bytes(buf, cache_size)


from iic.critic.Markov import MarkovCritic  # noqa: E402
from iic.critic.Markov import train  # noqa: E402
from iic.critic.Markov import DEFAULT_MAX_ORDER  # noqa: E402
