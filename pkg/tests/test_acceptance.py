"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one ``ACCEPTANCE <n> (<name>): PASS|FAIL`` line (visible
with ``pytest -s``); the assertions carry the tolerances, so the suite is
green iff every criterion holds.
"""

import functools
import time

import numpy as np
import pytest

from tsdiar.decode import DecodeConfig, OracleNoisyModel, decode
from tsdiar.fusion import SystemHypothesis, align_labels, fuse, select_mask
from tsdiar.metrics import cpwer, der
from tsdiar.profiles import make_synthetic_pool
from tsdiar.rttm import (
    RttmParseError,
    SpeakerTranscript,
    parse_rttm,
    write_rttm,
)
from tsdiar.simulate import SessionSpec, batch, generate, perturb
from tsdiar.timeline import Diarization, FrameGrid, rasterize, segmentize

import oracles


def criterion(num, name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {num} ({name}): FAIL")
                raise
            print(f"ACCEPTANCE {num} ({name}): PASS")

        return wrapper

    return decorate


@criterion(1, "metric oracle equivalence")
def test_der_matches_brute_force_oracle():
    start = time.monotonic()
    rng = np.random.default_rng(1001)
    for trial in range(200):
        ref = oracles.random_diarization(rng, max_speakers=4, max_turns=20, max_time=60.0)
        if trial % 2 == 0:
            hyp = oracles.mutated_hypothesis(rng, ref)
        else:
            hyp = oracles.random_diarization(rng, max_speakers=4, max_turns=20, max_time=60.0)
        want = oracles.brute_force_der(ref, hyp)
        got = der(ref, hyp)
        scale = max(1e-12, abs(want["der"]))
        assert abs(got.der - want["der"]) <= 1e-6 * scale, (
            f"trial {trial}: interval {got.der} vs frame {want['der']}"
        )
        for key in ("missed", "false_alarm", "confusion", "total_ref_speech"):
            ref_val = want[key]
            assert abs(getattr(got, key) - ref_val) <= 1e-6 * max(1e-12, abs(ref_val))
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"took {elapsed:.1f}s, limit 30s"


@criterion(2, "cpWER assignment optimality")
def test_cpwer_matches_permutation_search():
    start = time.monotonic()
    rng = np.random.default_rng(2002)
    vocab = ["red", "green", "blue", "cyan", "plum", "gold", "jade", "rust"]
    for trial in range(100):
        n_ref = int(rng.integers(1, 7))
        n_hyp = int(rng.integers(0, 7))
        ref_words = {
            f"r{i}": [vocab[k] for k in rng.integers(0, len(vocab), rng.integers(1, 10))]
            for i in range(n_ref)
        }
        hyp_words = {
            f"h{j}": [vocab[k] for k in rng.integers(0, len(vocab), rng.integers(0, 10))]
            for j in range(n_hyp)
        }
        ref = {s: SpeakerTranscript("rec", s, ((0.0, tuple(w)),)) for s, w in ref_words.items()}
        hyp = {s: SpeakerTranscript("rec", s, ((0.0, tuple(w)),)) for s, w in hyp_words.items()}
        got = cpwer(ref, hyp)
        want = oracles.brute_force_cpwer(ref_words, hyp_words)
        assert got.cpwer == want, f"trial {trial}: {got.cpwer} != {want}"
        assert got.substitutions + got.deletions + got.insertions == round(want * got.ref_words)
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s, limit 10s"


@criterion(3, "fusion fidelity")
def test_fusion_matches_direct_sum_and_majority_vote():
    rng = np.random.default_rng(3003)
    grid = FrameGrid(frame_step=0.01, total_frames=1200)
    speakers = ("a", "b", "c")

    def random_system(i):
        from tsdiar.timeline import ActivityMatrix

        values = (rng.random((grid.total_frames, len(speakers))) < 0.35).astype(float)
        act = ActivityMatrix(grid=grid, speakers=speakers, values=values)
        return segmentize(act, recording_id="rec")

    diars = [random_system(i) for i in range(3)]
    raw_weights = rng.random(3) + 0.05
    g = raw_weights / raw_weights.sum()
    hyps = [SystemHypothesis(f"s{i}", d, float(w)) for i, (d, w) in enumerate(zip(diars, g))]
    _, mappings = align_labels(hyps)
    fused = fuse(hyps, grid)
    vad = np.stack(
        [
            rasterize(h.diar.relabeled(mappings[h.system_id].a_to_b), grid,
                      speakers=fused.speakers).values
            for h in hyps
        ]
    )
    direct = np.tensordot(g, vad, axes=1)
    frames = rng.integers(0, grid.total_frames, size=1000)
    cols = rng.integers(0, len(fused.speakers), size=1000)
    assert np.max(np.abs(fused.weights[frames, cols] - direct[frames, cols])) <= 1e-12

    uniform = [SystemHypothesis(f"s{i}", d, 1.0) for i, d in enumerate(diars)]
    _, maps_u = align_labels(uniform)
    fused_u = fuse(uniform, grid)
    mask = select_mask(fused_u, threshold=0.51)
    votes = sum(
        rasterize(h.diar.relabeled(maps_u[h.system_id].a_to_b), grid,
                  speakers=fused_u.speakers).values
        for h in uniform
    )
    majority = (votes >= 2).astype(float)
    assert np.array_equal(mask.values, majority)


@criterion(4, "unknown speaker count handling")
def test_speaker_count_handling_dummies_and_capacity():
    pool = make_synthetic_pool(8, seed=99)
    counts = [2, 5, 8]
    for run in range(50):
        n = counts[run % 3]
        duration = 60.0 if n <= 5 else 90.0
        sess = generate(SessionSpec(n_speakers=n, duration=duration, target_overlap=0.2,
                                    seed=4000 + run))
        init = perturb(sess.ground_truth, 0.2, "boundary_jitter", seed=run)
        model = OracleNoisyModel(ground_truth=sess.ground_truth, capacity=8, profile_dim=64,
                                 flip_prob=0.02, rng_seed=run)
        out = decode(sess.feats, init, model, pool, DecodeConfig(capacity=8, iterations=2),
                     seed=run)
        pool_labels = {p.label for p in pool.profiles}
        for hyp in (*out.history, out.final):
            assert not (set(hyp.speakers) & pool_labels), f"dummy leaked in run {run}"
            assert set(hyp.speakers) <= set(sess.ground_truth.speakers)

    # under-capacity: a 5-node model on 8-speaker sessions must lose speakers
    for seed in range(5):
        sess = generate(SessionSpec(n_speakers=8, duration=90.0, target_overlap=0.2,
                                    seed=4500 + seed))
        model = OracleNoisyModel(ground_truth=sess.ground_truth, capacity=5, profile_dim=64,
                                 rng_seed=seed)
        out = decode(sess.feats, sess.ground_truth, model, pool,
                     DecodeConfig(capacity=5, iterations=2), seed=seed)
        assert len(out.final.speakers) <= 5


@criterion(5, "decoding improves perturbed initializations")
def test_decode_improvement_rate():
    start = time.monotonic()
    improved = 0
    trials = 100
    for seed in range(trials):
        sess = generate(SessionSpec(n_speakers=4, duration=60.0, target_overlap=0.2,
                                    seed=5000 + seed))
        init = perturb(sess.ground_truth, 0.20, "boundary_jitter", seed=seed)
        init_der = der(sess.ground_truth, init).der
        assert 0.15 <= init_der <= 0.25
        model = OracleNoisyModel(ground_truth=sess.ground_truth, capacity=8, profile_dim=64,
                                 flip_prob=0.05, rng_seed=seed)
        out = decode(sess.feats, init, model, make_synthetic_pool(8, seed=seed),
                     DecodeConfig(capacity=8, iterations=2), seed=seed)
        final_der = der(sess.ground_truth, out.final).der
        if final_der <= 0.70 * init_der:
            improved += 1
    elapsed = time.monotonic() - start
    assert improved >= 95, f"only {improved}/{trials} improved by >= 30% relative"
    assert elapsed < 120.0, f"took {elapsed:.1f}s, limit 120s"


@criterion(6, "fused initialization at least matches the best single one")
def test_fusion_helps_decoding():
    styles = ("boundary_jitter", "miss_overlap", "merge_speakers")
    finals = {name: [] for name in (*styles, "fused")}
    pool = make_synthetic_pool(8, seed=66)
    cfg = DecodeConfig(capacity=8, iterations=2)
    for seed in range(100):
        sess = generate(SessionSpec(n_speakers=8, duration=120.0, target_overlap=0.2,
                                    seed=6000 + seed))
        gt = sess.ground_truth
        hyps = {style: perturb(gt, 0.2, style, seed=seed) for style in styles}
        model = OracleNoisyModel(ground_truth=gt, capacity=8, profile_dim=64,
                                 flip_prob=0.05, rng_seed=seed)
        systems = [SystemHypothesis(style, hyps[style], 1.0) for style in styles]
        grid = sess.feats.grid
        fused_init = segmentize(select_mask(fuse(systems, grid), threshold=0.51),
                                recording_id=gt.recording_id)
        inits = dict(hyps, fused=fused_init)
        for name, init in inits.items():
            out = decode(sess.feats, init, model, pool, cfg, seed=seed)
            finals[name].append(der(gt, out.final).der)
    means = {name: float(np.mean(vals)) for name, vals in finals.items()}
    best_single = min(means[s] for s in styles)
    assert means["fused"] <= best_single + 0.005, f"means: {means}"


@criterion(7, "simulator overlap calibration")
def test_simulator_overlap_calibration():
    for target in (0.0, 0.10, 0.20, 0.30, 0.40):
        for seed in range(3):
            sess = generate(SessionSpec(n_speakers=5, duration=120.0, target_overlap=target,
                                        seed=7000 + seed))
            assert abs(sess.measured_overlap - target) <= 0.02
            if target == 0.0:
                assert sess.measured_overlap == 0.0
            # independent millisecond frame count
            gt = sess.ground_truth
            act, _ = oracles.frame_activity(gt, int(np.ceil(gt.extent / 0.001)))
            per_frame = act.sum(axis=1)
            frame_ratio = (per_frame >= 2).sum() / max(1, (per_frame >= 1).sum())
            assert abs(frame_ratio - target) <= 0.021


@criterion(8, "RTTM round-trip and fuzz robustness")
def test_rttm_round_trip_and_fuzz(tmp_path):
    manifest = batch(
        [
            SessionSpec(n_speakers=3, duration=45.0, target_overlap=0.0, silence_style="long", seed=81),
            SessionSpec(n_speakers=4, duration=45.0, target_overlap=0.2, seed=82),
        ],
        tmp_path / "corpus",
        perturb_der=0.2,
    )
    rttm_paths = []
    for session in manifest["sessions"]:
        for mini in session["mini_sessions"]:
            rttm_paths.append(tmp_path / "corpus" / mini["files"]["ground_truth_rttm"])
            rttm_paths.extend(
                tmp_path / "corpus" / p for p in mini["files"]["hypotheses"].values()
            )
    rng = np.random.default_rng(88)
    extra = {
        f"r{i}": oracles.random_diarization(rng, recording_id=f"r{i}") for i in range(10)
    }
    texts = [p.read_text() for p in rttm_paths] + [write_rttm(extra)]
    assert len(texts) > 8
    for text in texts:
        first = parse_rttm(text)
        assert parse_rttm(write_rttm(first)) == first
        assert write_rttm(parse_rttm(write_rttm(first))) == write_rttm(first)

    for trial in range(10_000):
        blob = rng.bytes(int(rng.integers(0, 200)))
        try:
            parse_rttm(blob)
        except RttmParseError:
            pass
