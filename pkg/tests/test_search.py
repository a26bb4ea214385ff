import itertools

import numpy as np
import pytest

from iic import DomainError
from iic.midi import NoteList
from iic.tokenizer import OFFSETS
from iic.tokenizer import VOCAB_SIZE
from iic.tokenizer import TIMESHIFT_GRID
from iic.tokenizer import TokenSeq
from iic.tokenizer import TokenType
from iic.tokenizer import StructureError
from iic.tokenizer import tokenize
from iic.tokenizer import quantize
from iic.critic import CriticModel
from iic.critic import token_ic
from iic.critic import corpus_ic
from iic.critic import train
from iic.critic import target_entropy
from iic.surprisal import Curve
from iic.surprisal import KernelConfig
from iic.surprisal import iic_curve
from iic.surprisal import ic_deviation
from iic.curves import Shape
from iic.curves import ShapeSpec
from iic.curves import make_shape
from iic.curves import piece_curve
from iic.search import THREADS_ENV
from iic.search import BeamState
from iic.search import Manifest
from iic.search import SearchParams
from iic.search import SearchAbortedError
from iic.search import candidate_rng
from iic.search import expand_step
from iic.search import select_best
from iic.search import generate
from iic.search import generate_many
from iic.search import read_manifest
from iic.search import sweep
from iic.search import calibrate_entropy_scales
from iic.search import UNIT_ENTROPY_SCALES

from conftest import make_piece


CFG = KernelConfig(window_l=2.0, delta_t=0.1)


def constant_target(level=2.0, duration=2.0):
    return make_shape(ShapeSpec(Shape.CONSTANT, level, level, duration), CFG.delta_t)


def small_params(**kwargs):
    fields = dict(duration=2.0, step_size=0.5, k=3, seed=5, threads=2)
    fields.update(kwargs)
    return SearchParams(**fields)


def test_params_validation():
    with pytest.raises(DomainError):
        SearchParams(0.0)
    with pytest.raises(DomainError):
        SearchParams(1.0, k=0)
    with pytest.raises(DomainError):
        SearchParams(1.0, c_h=0.0)
    with pytest.raises(DomainError):
        SearchParams(1.0, seed=-1)
    with pytest.raises(DomainError):
        SearchParams(1.0, h_max_mode="other")
    with pytest.raises(DomainError):
        SearchParams(1.0, max_tokens_per_step=3)
    assert SearchParams(1.0, step_size=0.3).iteration_count() == 4
    assert SearchParams(0.9, step_size=0.3).iteration_count() == 3
    assert SearchParams(1.0, c_h=None).c_h is None


def test_worker_count(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert SearchParams(1.0).worker_count() == 3
    assert SearchParams(1.0, threads=1).worker_count() == 1
    monkeypatch.setenv(THREADS_ENV, "many")
    assert SearchParams(1.0).worker_count() >= 1


def test_candidate_streams():
    a = candidate_rng(1, 2, 3).random(4)
    b = candidate_rng(1, 2, 3).random(4)
    c = candidate_rng(1, 2, 4).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_expand_step(model, pieces):
    prompt = tokenize(NoteList(pieces[0][:6]))
    state = BeamState(prompt, TokenSeq(), ics=token_ic(model, prompt))
    params = small_params(k=4)
    candidates = expand_step(state, params, model, model, constant_target(), 1)
    assert [c.index for c in candidates] == [0, 1, 2, 3]
    for c in candidates:
        c.generated.validate()
        assert len(c.ics) == len(prompt) + len(c.generated)
        end = c.generated_duration
        assert end > params.step_size
        assert end - c.generated.timeshifts()[-1] <= params.step_size + 1e-9
        assert not c.truncated
        assert c.sequence[:len(prompt)] == prompt
    with pytest.raises(DomainError):
        expand_step(state, params, model, model, constant_target(), 0)


def test_expand_step_is_schedule_independent(model):
    state = BeamState(TokenSeq(), TokenSeq(), ics=np.zeros(0))
    params = small_params(k=4)
    serial = expand_step(state, params, model, model, constant_target(), 2)
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=4) as executor:
        parallel = expand_step(state, params, model, model, constant_target(), 2, executor)
    assert [c.generated for c in serial] == [c.generated for c in parallel]


class PitchOnlyCritic(CriticModel):
    """
    Always predicts the same Pitch token, whatever the position.
    """
    def __init__(self):
        super(PitchOnlyCritic, self).__init__()
        self._d = np.zeros(VOCAB_SIZE)
        self._d[39] = 1.0

    @property
    def vocab_size(self):
        return VOCAB_SIZE

    def next_dist(self, prefix):
        return self._d

    def to_bytes(self):
        return b"pitch-only"


def test_generator_breaking_the_cycle():
    critic = PitchOnlyCritic()
    state = BeamState(TokenSeq(), TokenSeq(), ics=np.zeros(0))
    with pytest.raises(StructureError) as e:
        expand_step(state, small_params(k=1, c_h=None), critic, critic, constant_target(), 1)
    assert e.value.index == 1


def _note(pitch, ts_index):
    return [OFFSETS[TokenType.PITCH] + pitch - 21,
            OFFSETS[TokenType.VELOCITY] + 64,
            OFFSETS[TokenType.DURATION] + 9,
            OFFSETS[TokenType.TIMESHIFT] + ts_index]


def test_select_best_matches_exhaustive_argmin(model, pieces):
    prompt = tokenize(NoteList(pieces[2][:5]))
    continuations = [TokenSeq(_note(p, ts))
                     for p, ts in itertools.product((60, 64, 67, 71), (25, 50))]
    horizon, duration = 0.5, 1.0
    rng = np.random.default_rng(21)
    for _ in range(50):
        lo, hi = sorted(rng.uniform(0.0, 6.0, size=2))
        kind = list(Shape)[int(rng.integers(len(Shape)))]
        target = make_shape(ShapeSpec(kind, lo, hi, duration), CFG.delta_t)

        expected = []
        for gen in continuations:
            seq = prompt + gen
            curve = iic_curve(seq, token_ic(model, seq), CFG, duration,
                              origin=prompt.duration())
            expected.append(ic_deviation(target, curve, horizon))

        candidates = [BeamState(prompt, gen, index=j) for j, gen in enumerate(continuations)]
        best = select_best(candidates, target, model, horizon, CFG, duration)
        assert best.index == int(np.argmin(expected))
        assert best.deviation == pytest.approx(min(expected))


def test_select_best_ties_and_truncation(model):
    gen = TokenSeq(_note(60, 25))
    a = BeamState(TokenSeq(), gen, index=0)
    b = BeamState(TokenSeq(), gen, index=1)
    target = constant_target(duration=1.0)
    assert select_best([a, b], target, model, 0.5, CFG, 1.0).index == 0

    c = BeamState(TokenSeq(), gen, index=0, truncated=True)
    d = BeamState(TokenSeq(), gen, index=1)
    assert select_best([c, d], target, model, 0.5, CFG, 1.0).index == 1

    with pytest.raises(SearchAbortedError):
        select_best([BeamState(TokenSeq(), gen, truncated=True)], target, model, 0.5, CFG)
    with pytest.raises(DomainError):
        select_best([], target, model, 0.5, CFG)


def test_generate(model, pieces):
    prompt = NoteList(pieces[0][:8])
    result = generate(prompt, constant_target(), model, model, CFG, small_params())
    assert len(result.notes) > 0
    assert all(n.onset < 2.0 for n in result.notes)
    assert len(result.curve) == 21
    assert np.isfinite(result.deviation)
    assert result.deviation == ic_deviation(constant_target(), result.curve, 2.0)
    assert result.state.generated_duration >= 2.0
    result.state.generated.validate()
    assert result.manifest["prompt_notes"] == 8
    assert result.manifest["deviation"] == result.deviation
    assert result.manifest["k"] == 3


def test_generate_is_deterministic(model):
    a = generate(NoteList(), constant_target(), model, model, CFG, small_params(threads=1))
    b = generate(NoteList(), constant_target(), model, model, CFG, small_params(threads=4))
    assert a.notes == b.notes
    assert a.manifest == b.manifest
    free = small_params(c_h=None, k=1)
    c = generate(NoteList(), constant_target(), model, model, CFG, free)
    d = generate(NoteList(), constant_target(), model, model, CFG, free.replace(seed=6))
    assert c.state.generated != d.state.generated


def test_generate_without_temperature(model):
    result = generate(NoteList(), constant_target(), model, model, CFG,
                      small_params(c_h=None, k=2))
    assert result.manifest["c_h"] is None
    assert result.state.entropies == ()


def test_generate_rejects_short_target(model):
    with pytest.raises(DomainError):
        generate(NoteList(), constant_target(duration=1.0), model, model, CFG, small_params())


def test_manifest_round_trip(model, tmp_path):
    result = generate(NoteList(), constant_target(), model, model, CFG, small_params(k=2))
    path = str(tmp_path / "run.manifest.txt")
    result.manifest.write(path)
    back = read_manifest(path)
    assert back == result.manifest
    assert isinstance(back["q_hash"], str)
    assert back["deviation"] == result.deviation
    assert back.kernel_config() == CFG

    params = back.search_params(threads=2)
    again = generate(NoteList(), constant_target(), model, model, back.kernel_config(), params)
    assert again.notes == result.notes


def test_manifest_text():
    m = Manifest.from_text("# comment\nseed=3\nc_h=none\nstep_size=0.3\nq_hash=123\n")
    assert m["seed"] == 3
    assert m["c_h"] is None
    assert m["step_size"] == 0.3
    assert m["q_hash"] == "123"
    with pytest.raises(DomainError):
        Manifest.from_text("no separator\n")


def test_generate_many(model):
    results = generate_many(NoteList(), constant_target(), model, model, CFG,
                            small_params(k=2), samples=3, keep=2)
    assert len(results) == 2
    assert results[0].deviation <= results[1].deviation
    assert results[0].manifest["seed"] != 5
    with pytest.raises(DomainError):
        generate_many(NoteList(), constant_target(), model, model, CFG,
                      small_params(), samples=2, keep=3)


def test_sweep(model):
    target = constant_target(duration=1.0)
    base = small_params(duration=1.0)
    result = sweep([(NoteList(), target)], model, model, CFG, base, "k", [1, 2], [0, 1])
    assert len(result.rows) == 4
    assert [r.value for r in result.rows] == [1, 1, 2, 2]
    assert [r.seed for r in result.rows] == [0, 1, 0, 1]
    assert list(result.medians) == [1, 2]
    assert result.medians[1] == pytest.approx(np.median([r.deviation for r in result.rows[:2]]))

    off = sweep([(NoteList(), target)], model, model, CFG, base, "ch", [0.0, 50.0], [0])
    assert [r.value for r in off.rows] == [None, 50.0]
    with pytest.raises(DomainError):
        sweep([(NoteList(), target)], model, model, CFG, base, "depth", [1], [0])


def test_curve_type(model):
    result = generate(NoteList(), constant_target(), model, model, CFG, small_params(k=1))
    assert isinstance(result.curve, Curve)
    assert result.curve.t0 == 0.0


def test_expansion_stops_at_the_absolute_horizon(model):
    ts = quantize(0.2, TIMESHIFT_GRID)
    generated = TokenSeq(_note(60, ts) + _note(62, ts) + _note(64, ts) + _note(65, ts))
    state = BeamState(TokenSeq(), generated, ics=token_ic(model, generated))
    assert state.generated_duration == pytest.approx(0.8)

    params = small_params(k=4)
    horizon = 2 * params.step_size
    for c in expand_step(state, params, model, model, constant_target(), 2):
        assert c.generated[:len(generated)] == generated
        end = c.generated_duration
        assert end > horizon
        assert end - c.generated.timeshifts()[-1] <= horizon + 1e-9


def test_generated_material_tracks_the_horizon(model):
    params = small_params(duration=3.0, step_size=0.3, k=2, c_h=None)
    target = constant_target(duration=3.0)
    result = generate(NoteList(), target, model, model, CFG, params)
    shifts = result.state.generated.timeshifts()
    end = result.state.generated_duration
    assert end >= 3.0 - 1e-9
    assert end - shifts[-1] <= 3.0 + 1e-9
    assert result.manifest["iterations"] <= params.iteration_count()


def test_cap_stopped_candidates_that_advance_stay_selectable():
    dense = [tokenize(make_piece(seed, count=80, iois=(0.1,))) for seed in range(3)]
    m = train(dense, max_order=3)
    params = SearchParams(4.0, step_size=2.0, k=4, c_h=None, seed=1, threads=2)
    state = BeamState(TokenSeq(), TokenSeq(), ics=np.zeros(0))
    candidates = expand_step(state, params, m, m, constant_target(duration=4.0), 1)
    assert any(len(c.generated) == params.max_tokens_per_step for c in candidates)
    assert not any(c.truncated for c in candidates)

    result = generate(NoteList(), constant_target(duration=4.0), m, m, CFG, params)
    assert result.state.generated_duration >= 4.0
    assert result.manifest["truncated_candidates"] == 0


class StandstillCritic(CriticModel):
    """
    Repeats one note with a zero Timeshift forever.
    """
    def __init__(self):
        super(StandstillCritic, self).__init__()
        self._dists = []
        for token in _note(60, 0):
            d = np.zeros(VOCAB_SIZE)
            d[token] = 1.0
            self._dists.append(d)

    @property
    def vocab_size(self):
        return VOCAB_SIZE

    def next_dist(self, prefix):
        return self._dists[len(prefix) % 4]

    def to_bytes(self):
        return b"standstill"


def test_candidates_that_never_advance_abort_the_search():
    critic = StandstillCritic()
    state = BeamState(TokenSeq(), TokenSeq(), ics=np.zeros(0))
    params = small_params(k=2, c_h=None, max_tokens_per_step=8)
    candidates = expand_step(state, params, critic, critic, constant_target(), 1)
    assert all(c.truncated for c in candidates)
    assert all(len(c.generated) == 8 for c in candidates)
    with pytest.raises(SearchAbortedError):
        generate(NoteList(), constant_target(), critic, critic, CFG, params)


def test_temperature_path_hits_the_target_entropy(model):
    target = constant_target(level=5.0, duration=1.0)
    state = BeamState(TokenSeq(), TokenSeq(), ics=np.zeros(0))
    params = small_params(duration=1.0, k=2, c_h=50.0, entropy_scales=UNIT_ENTROPY_SCALES)
    for c in expand_step(state, params, model, model, target, 1):
        assert c.unreached == 0
        assert len(c.entropies) == len(c.generated)
        assert all(abs(h - 0.1) <= 1e-3 for h in c.entropies)


def test_entropy_scales_apply_per_token_type(model):
    target = constant_target(level=5.0, duration=1.0)
    state = BeamState(TokenSeq(), TokenSeq(), ics=np.zeros(0))
    params = small_params(duration=1.0, k=1, c_h=50.0, entropy_scales=(1.0, 2.0, 3.0, 4.0))
    c = expand_step(state, params, model, model, target, 1)[0]
    for i, h in enumerate(c.entropies):
        assert abs(h - 0.1 * (i % 4 + 1)) <= 1e-3
    with pytest.raises(DomainError):
        small_params(entropy_scales=(1.0, 0.0, 1.0, 1.0))
    with pytest.raises(DomainError):
        small_params(entropy_scales=(1.0, 1.0))


def test_calibrated_scales_ask_for_mean_ic_at_mean_level(model, pieces):
    scales = calibrate_entropy_scales(pieces, model, CFG)
    assert len(scales) == 4

    corpus = [tokenize(p) for p in pieces]
    ics = corpus_ic(model, corpus)
    level = np.mean(np.concatenate([piece_curve(p, model, CFG, ics=ic)[0].values
                                    for p, ic in zip(pieces, ics)]))
    types = np.concatenate([np.arange(len(seq)) % 4 for seq in corpus])
    pooled = np.concatenate(ics)
    for t in range(4):
        assert target_entropy(level * scales[t], 50.0) == \
            pytest.approx(pooled[types == t].mean())

    doubled = calibrate_entropy_scales(pieces, model, CFG, ics=ics, c_h=100.0)
    np.testing.assert_allclose(doubled, 2 * np.array(scales))
    with pytest.raises(DomainError):
        calibrate_entropy_scales([NoteList()], model, CFG)


def test_generate_uses_the_stored_entropy_scales(model):
    stored = model.with_calibration(entropy_scales=(0.5, 0.25, 0.125, 2.0))
    result = generate(NoteList(), constant_target(), stored, stored, CFG, small_params(k=1))
    assert result.manifest["entropy_scale_pitch"] == 0.5
    assert result.manifest["entropy_scale_timeshift"] == 2.0
    assert result.manifest.search_params().entropy_scales == (0.5, 0.25, 0.125, 2.0)

    plain = generate(NoteList(), constant_target(), model, model, CFG, small_params(k=1))
    assert plain.manifest.search_params().entropy_scales == UNIT_ENTROPY_SCALES

    explicit = small_params(k=1, entropy_scales=(3.0, 3.0, 3.0, 3.0))
    result = generate(NoteList(), constant_target(), stored, stored, CFG, explicit)
    assert result.manifest["entropy_scale_velocity"] == 3.0
