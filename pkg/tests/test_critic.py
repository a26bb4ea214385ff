import numpy as np
import pytest

from iic import DomainError
from iic.tokenizer import VOCAB_SIZE
from iic.tokenizer import TokenType
from iic.tokenizer import type_mask
from iic.critic import R_MAX
from iic.critic import R_MIN
from iic.critic import CorpusError
from iic.critic import ModelFormatError
from iic.critic import MarkovCritic
from iic.critic import train
from iic.critic import sample
from iic.critic import entropy
from iic.critic import token_ic
from iic.critic import corpus_ic
from iic.critic import model_hash
from iic.critic import save_model
from iic.critic import load_model
from iic.critic import match_entropy
from iic.critic import target_entropy
from iic.critic import apply_temperature
from iic.critic import type_entropy_ceiling


def test_distributions_follow_the_type_cycle(model, corpus):
    ids = corpus[0].ids
    for n in range(8):
        d = model.next_dist(ids[:n])
        assert d.sum() == pytest.approx(1.0)
        allowed = type_mask(n % 4)
        assert np.all(d[allowed] > 0)
        assert np.all(d[~allowed] == 0)


def test_next_dist_is_cached_and_read_only(model, corpus):
    prefix = corpus[1].ids[:9]
    d = model.next_dist(prefix)
    assert model.next_dist(list(prefix)) is d
    with pytest.raises(ValueError):
        d[0] = 1.0


def test_unmasked_model_covers_the_vocabulary(corpus):
    m = train(corpus, max_order=2, mask=False)
    d = m.next_dist(corpus[0].ids[:3])
    assert len(d) == VOCAB_SIZE
    assert np.all(d > 0)
    assert d.sum() == pytest.approx(1.0)


def test_training_counts(model, corpus):
    assert model.token_count == sum(len(s) for s in corpus)
    assert model.sequence_count == len(corpus)
    assert model.max_order == 3
    assert model.type_mask


def test_seen_continuation_beats_unseen(model, corpus):
    ids = corpus[0].ids
    d = model.next_dist(ids[:4])
    assert d[ids[4]] > 1.0 / 88


def test_empty_corpus():
    with pytest.raises(CorpusError):
        train([])
    with pytest.raises(CorpusError):
        train([[]])
    with pytest.raises(DomainError):
        train([[0, 88, 216, 320]], max_order=0)


def test_token_ic(model, corpus):
    seq = corpus[2]
    ics = token_ic(model, seq)
    assert len(ics) == len(seq)
    assert np.all(ics > 0)
    assert ics[5] == pytest.approx(-np.log(model.next_dist(seq.ids[:5])[seq.ids[5]]))
    assert [list(x) for x in corpus_ic(model, corpus[:2])] == \
        [list(token_ic(model, s)) for s in corpus[:2]]
    with pytest.raises(DomainError):
        token_ic(model, [])


def test_model_file_round_trip(model, corpus, tmp_path):
    calibrated = model.with_calibration((0.5, 0.25), (1.0, 3.0))
    buf = calibrated.to_bytes()
    loaded = MarkovCritic.from_bytes(buf)
    assert loaded.to_bytes() == buf
    assert loaded.type_weights == (0.5, 0.25)
    assert loaded.levels == (1.0, 3.0)
    assert loaded.entropy_scales == (0.0,) * 4
    assert loaded.context_count == model.context_count
    np.testing.assert_array_equal(loaded.next_dist(corpus[3].ids[:7]),
                                  model.next_dist(corpus[3].ids[:7]))

    path = str(tmp_path / "m.iicm")
    save_model(calibrated, path)
    assert model_hash(load_model(path)) == model_hash(calibrated)
    assert model_hash(model) != model_hash(calibrated)


def test_model_file_validation(model):
    buf = model.to_bytes()
    with pytest.raises(ModelFormatError):
        MarkovCritic.from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(ModelFormatError):
        MarkovCritic.from_bytes(buf[:4] + b"\x00\x09" + buf[6:])
    with pytest.raises(ModelFormatError):
        MarkovCritic.from_bytes(buf[:len(buf) // 2])
    with pytest.raises(ModelFormatError):
        MarkovCritic.from_bytes(buf[:10])


def test_apply_temperature():
    d = np.array([0.5, 0.3, 0.2, 0.0])
    same = apply_temperature(d, 1.0)
    np.testing.assert_array_equal(same, d)
    assert same is not d

    hot = apply_temperature(d, 10.0)
    cold = apply_temperature(d, 0.1)
    assert hot[3] == 0 and cold[3] == 0
    assert hot.sum() == pytest.approx(1.0)
    assert entropy(cold) < entropy(d) < entropy(hot)
    assert np.argmax(cold) == 0
    with pytest.raises(DomainError):
        apply_temperature(d, 0.0)


def test_entropy_is_monotone_in_temperature():
    rng = np.random.default_rng(7)
    rs = np.logspace(np.log10(R_MIN), np.log10(R_MAX), 100)
    for _ in range(100):
        d = rng.dirichlet(np.full(int(rng.integers(2, 30)), 0.5))
        hs = [entropy(apply_temperature(d, r)) for r in rs]
        assert np.all(np.diff(hs) >= -1e-9)


def test_match_entropy_feasible_targets():
    rng = np.random.default_rng(11)
    for _ in range(500):
        d = rng.dirichlet(np.full(int(rng.integers(2, 30)), 0.5))
        h_lo = entropy(apply_temperature(d, R_MIN))
        h_hi = entropy(apply_temperature(d, R_MAX))
        h_target = h_lo + rng.uniform() * (h_hi - h_lo)
        m = match_entropy(d, h_target)
        assert not m.unreached
        assert abs(entropy(apply_temperature(d, m.r)) - h_target) <= 1e-3
        assert m.entropy == pytest.approx(entropy(apply_temperature(d, m.r)))


def test_match_entropy_infeasible_targets():
    d = np.array([0.7, 0.2, 0.1])
    m = match_entropy(d, np.log(3) + 1.0)
    assert m.r == R_MAX
    assert m.unreached

    m = match_entropy(np.array([0.0, 1.0, 0.0]), 1.0)
    assert m.unreached
    assert m.entropy == 0.0

    assert match_entropy(d, entropy(d)).r == 1.0
    with pytest.raises(DomainError):
        match_entropy(d, -1.0)


def test_target_entropy():
    assert target_entropy(100.0, 50.0) == 2.0
    assert target_entropy(-3.0, 50.0) == 0.0
    assert target_entropy(1e9, 50.0) == pytest.approx(np.log(VOCAB_SIZE))
    assert target_entropy(1e9, 50.0, h_max=1.0) == 1.0
    assert target_entropy(5.0, 50.0, h_max=6.0) == pytest.approx(0.1)
    assert target_entropy(1000.0, 10.0, h_max=6.0) == 6.0
    with pytest.raises(DomainError):
        target_entropy(1.0, 0.0)


def test_type_entropy_ceiling():
    assert type_entropy_ceiling(TokenType.PITCH) == pytest.approx(np.log(88))
    assert type_entropy_ceiling(TokenType.TIMESHIFT) == pytest.approx(np.log(105))


def test_sample():
    d = np.array([0.2, 0.0, 0.8])
    draws = [sample(d, np.random.default_rng(s)) for s in range(2000)]
    assert 1 not in draws
    assert np.mean(np.array(draws) == 2) == pytest.approx(0.8, abs=0.05)

    a = np.random.default_rng(3)
    b = np.random.default_rng(3)
    assert [sample(d, a) for _ in range(50)] == [sample(d, b) for _ in range(50)]


A, B = 0, 1


def test_witten_bell_hand_example():
    m = train([[A, A, A]], max_order=1, vocab_size=2, mask=False)
    d = m.next_dist([A])
    # unigram 3/4 + 1/4 * 1/2, then 2/3 + 1/3 * that
    assert d[A] == pytest.approx(2.0 / 3.0 + 0.875 / 3.0)
    assert d[A] == pytest.approx(0.9583, abs=1e-4)
    assert d.sum() == pytest.approx(1.0)
    assert token_ic(m, [A, A])[1] == pytest.approx(0.0426, abs=1e-4)


def test_alternating_corpus_predicts_the_other_token():
    m = train([[A, B, A, B]], max_order=1, vocab_size=2, mask=False)
    assert np.argmax(m.next_dist([A])) == B
    assert np.argmax(m.next_dist([A, B])) == A


def test_expected_ic_is_entropy(model, corpus):
    ids = list(corpus[1].ids)
    for n in (0, 1, 2, 3, 6):
        prefix = ids[:n]
        d = model.next_dist(prefix)
        support = np.flatnonzero(d)
        expected = sum(d[t] * token_ic(model, prefix + [int(t)])[-1] for t in support)
        assert expected == pytest.approx(entropy(d), rel=1e-9)


def test_training_data_is_less_surprising_than_shuffled(model, corpus):
    rng = np.random.default_rng(5)
    shuffled = []
    for seq in corpus:
        ids = np.array(seq.ids)
        for t in range(4):
            slots = np.arange(t, len(ids), 4)
            ids[slots] = rng.permutation(ids[slots])
        shuffled.append([int(i) for i in ids])
    trained = np.mean(np.concatenate(corpus_ic(model, corpus)))
    scrambled = np.mean(np.concatenate(corpus_ic(model, shuffled)))
    assert trained <= scrambled


def test_entropy_scales_are_stored(model):
    scaled = model.with_calibration(entropy_scales=(2.0, 0.5, 0.25, 1.5))
    loaded = MarkovCritic.from_bytes(scaled.to_bytes())
    assert loaded.entropy_scales == (2.0, 0.5, 0.25, 1.5)
    assert loaded.type_weights == model.type_weights
    with pytest.raises(DomainError):
        model.with_calibration(entropy_scales=(1.0, 1.0))
