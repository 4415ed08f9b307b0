"""Command-line entry point: simulate / fuse / decode / score / cpwer.

Every subcommand is deterministic given its flags and seeds. Reports print
as ``key=value`` lines by default; ``--json`` switches to a single JSON
document on stdout. Config file values override defaults, and explicit
flags override the file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import fusion, metrics, rttm, simulate
from .decode import DecodeConfig, OracleNoisyModel, decode, postprocess
from .profiles import load_features, load_pool, make_synthetic_pool
from .simulate import CalibrationError, SessionSpec
from .timeline import ActivityMatrix, Diarization, FrameGrid, segmentize


def _err(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


# --- simulate ----------------------------------------------------------------


def _parse_condition(token: str) -> tuple[float, str]:
    token = token.strip()
    if token.upper() == "0L":
        return 0.0, "long"
    if token.upper() == "0S":
        return 0.0, "short"
    return float(token) / 100.0, "short"


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.conditions:
        conditions = [_parse_condition(tok) for tok in args.conditions.split(",") if tok.strip()]
        if not conditions:
            return _err("--conditions is empty")
    else:
        conditions = [(args.overlap, args.silence)]
    specs: list[SessionSpec] = []
    session_ids: list[str] = []
    for si in range(args.sessions):
        for ci, (overlap, style) in enumerate(conditions):
            specs.append(
                SessionSpec(
                    n_speakers=args.speakers,
                    duration=args.duration,
                    target_overlap=overlap,
                    silence_style=style,
                    seed=args.seed * 10000 + si * 100 + ci,
                )
            )
            session_ids.append(f"session{si}")
    styles = tuple(s for s in args.perturb_styles.split(",") if s) if args.perturb_styles else ()
    simulate.batch(
        specs,
        args.out,
        session_ids=session_ids,
        perturb_styles=styles,
        perturb_der=args.perturb_der,
    )
    manifest_path = os.path.join(args.out, "manifest.json")
    print(f"manifest={manifest_path}")
    return 0


# --- fuse ---------------------------------------------------------------------


def _parse_hyp_flag(value: str) -> tuple[str, float]:
    path, sep, weight = value.rpartition(":")
    if sep and path:
        try:
            return path, float(weight)
        except ValueError:
            pass
    return value, 1.0


def cmd_fuse(args: argparse.Namespace) -> int:
    systems = []
    for i, flag in enumerate(args.hyp):
        path, weight = _parse_hyp_flag(flag)
        with open(path, "r", encoding="utf-8") as fh:
            systems.append((f"sys{i}", rttm.parse_rttm(fh), weight))
    recording_sets = [set(d) for _, d, _ in systems]
    if any(rs != recording_sets[0] for rs in recording_sets[1:]):
        return _err(
            "hypothesis files cover different recordings: "
            + "; ".join(",".join(sorted(rs)) or "(none)" for rs in recording_sets)
        )
    fused_diars: dict[str, Diarization] = {}
    soft: dict[str, np.ndarray | float] = {}
    for rec in sorted(recording_sets[0]):
        hyps = [
            fusion.SystemHypothesis(system_id=sid, diar=diars[rec], weight=w)
            for sid, diars, w in systems
        ]
        extent = max(h.diar.extent for h in hyps)
        grid = FrameGrid.covering(extent, frame_step=args.step)
        fused = fusion.fuse(hyps, grid)
        mask = fusion.select_mask(fused, threshold=args.threshold, sole_speaker=args.sole_speaker)
        fused_diars[rec] = segmentize(mask, args.min_turn, recording_id=rec)
        soft[f"{rec}.weights"] = fused.weights
        soft[f"{rec}.speakers"] = np.array(fused.speakers)
        soft[f"{rec}.frame_step"] = grid.frame_step
        soft[f"{rec}.origin"] = grid.origin
    rttm.dump_rttm(fused_diars, args.out)
    print(f"fused_rttm={args.out}")
    if args.soft_out:
        np.savez(args.soft_out, **soft)
        print(f"soft_weights={args.soft_out}")
    return 0


# --- decode -------------------------------------------------------------------


def _single_recording(diars: dict[str, Diarization], which: str | None, what: str) -> Diarization:
    if which is not None:
        if which not in diars:
            raise ValueError(f"{what} has no recording {which!r}")
        return diars[which]
    if len(diars) != 1:
        raise ValueError(f"{what} holds {len(diars)} recordings; pass --recording")
    return next(iter(diars.values()))


def _decode_config(args: argparse.Namespace) -> DecodeConfig:
    overrides = {
        "capacity": args.capacity,
        "iterations": args.iterations,
        "binarize_threshold": args.binarize_threshold,
        "median_filter_frames": args.median_frames,
        "min_turn": args.min_turn,
    }
    if args.config:
        return DecodeConfig.from_file(args.config, **overrides)
    return DecodeConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_decode(args: argparse.Namespace) -> int:
    if args.model == "posterior-file":
        if not args.posterior:
            return _err("--model posterior-file requires --posterior")
        data = np.load(args.posterior, allow_pickle=False)
        posteriors = data["posteriors"]
        labels = tuple(str(x) for x in data["labels"])
        dummies = frozenset(int(i) for i in data.get("dummy_indices", np.array([], dtype=int)))
        grid = FrameGrid(
            frame_step=float(data["frame_step"]),
            total_frames=posteriors.shape[0],
            origin=float(data.get("origin", 0.0)),
        )
        recording_id = str(data["recording_id"]) if "recording_id" in data else (args.recording or "rec")
        cfg = _decode_config(args)
        raw = ActivityMatrix(grid=grid, speakers=tuple(f"node{j}" for j in range(posteriors.shape[1])),
                             values=posteriors)
        result = postprocess(raw, dummies, labels, cfg, recording_id=recording_id)
        rttm.dump_rttm({recording_id: result}, args.out)
        final = result
        history: list[Diarization] = [result]
    else:
        if not args.features or not args.init:
            return _err("decode requires --features and --init")
        feats = load_features(args.features)
        init = _single_recording(rttm.load_rttm(args.init), args.recording, "--init")
        cfg = _decode_config(args)
        if not args.oracle_rttm:
            return _err("--model oracle-noisy requires --oracle-rttm (the ground-truth RTTM)")
        gt = _single_recording(rttm.load_rttm(args.oracle_rttm), args.recording, "--oracle-rttm")
        model = OracleNoisyModel(
            ground_truth=gt,
            capacity=cfg.capacity,
            profile_dim=feats.dim,
            match_threshold=args.match_threshold,
            flip_prob=args.flip_prob,
            smear_frames=args.smear_frames,
            rng_seed=args.model_seed,
        )
        pool = load_pool(args.pool) if args.pool else make_synthetic_pool(
            args.pool_size or cfg.capacity, dim=feats.dim, seed=args.seed
        )
        out = decode(feats, init, model, pool, cfg, seed=args.seed)
        final, history = out.final, list(out.history)
        rttm.dump_rttm({final.recording_id: final}, args.out)

    report: dict = {"output": args.out, "iterations": len(history)}
    if args.ref:
        ref = _single_recording(rttm.load_rttm(args.ref), args.recording, "--ref")
        scores = [metrics.der(ref, h, collar=args.collar) for h in history]
        report["per_iteration_der"] = [s.der for s in scores]
        report["final"] = scores[-1].to_dict() if scores else metrics.der(ref, final).to_dict()
    if args.json:
        print(json.dumps(report, sort_keys=True))
    else:
        print(f"output={args.out}")
        if args.ref:
            for i, value in enumerate(report["per_iteration_der"], start=1):
                print(f"iteration={i} der={value:.6f}")
            final_der = report["final"]["der"]
            print(f"final der={final_der:.6f}")
    return 0


# --- score --------------------------------------------------------------------


def _der_line(prefix: str, rep: dict) -> str:
    return (
        f"{prefix} der={rep['der']:.6f} missed={rep['missed']:.3f} "
        f"false_alarm={rep['false_alarm']:.3f} confusion={rep['confusion']:.3f} "
        f"ref_speech={rep['total_ref_speech']:.3f}"
    )


def _aggregate(reports: list[metrics.DerReport], collar: float) -> dict:
    missed = sum(r.missed for r in reports)
    fa = sum(r.false_alarm for r in reports)
    conf = sum(r.confusion for r in reports)
    ref = sum(r.total_ref_speech for r in reports)
    errors = missed + fa + conf
    der = errors / ref if ref > 0 else (float("inf") if errors > 0 else 0.0)
    return {
        "der": der,
        "missed": missed,
        "false_alarm": fa,
        "confusion": conf,
        "total_ref_speech": ref,
        "collar": collar,
    }


def cmd_score(args: argparse.Namespace) -> int:
    refs = rttm.load_rttm(args.ref)
    hyps = rttm.load_rttm(args.hyp)
    uem = {}
    if args.uem:
        with open(args.uem, "r", encoding="utf-8") as fh:
            uem = rttm.parse_uem(fh)
    common = sorted(set(refs))
    missing = sorted(set(refs) - set(hyps))

    def score_one(rec: str) -> tuple[str, metrics.DerReport, metrics.JerReport | None]:
        hyp = hyps.get(rec, Diarization(rec))
        der_rep = metrics.der(refs[rec], hyp, collar=args.collar, uem=uem.get(rec))
        jer_rep = metrics.jer(refs[rec], hyp) if args.jer else None
        return rec, der_rep, jer_rep

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        scored = list(pool.map(score_one, common))

    doc: dict = {"recordings": {}, "overall": {}}
    for rec, der_rep, jer_rep in scored:
        entry = der_rep.to_dict()
        if jer_rep is not None:
            entry.update(jer_rep.to_dict())
        doc["recordings"][rec] = entry
    doc["overall"] = _aggregate([d for _, d, _ in scored], args.collar)
    if args.jer:
        jer_values = [j.jer for _, _, j in scored if j is not None]
        doc["overall"]["jer"] = sum(jer_values) / len(jer_values) if jer_values else 0.0

    if args.manifest:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        condition_of = {}
        order: list[str] = []
        for session in manifest.get("sessions", []):
            for mini in session.get("mini_sessions", []):
                condition_of[mini["recording_id"]] = mini["condition"]
                if mini["condition"] not in order:
                    order.append(mini["condition"])
        by_condition: dict[str, list[metrics.DerReport]] = {}
        for rec, der_rep, _ in scored:
            cond = condition_of.get(rec)
            if cond is not None:
                by_condition.setdefault(cond, []).append(der_rep)
        doc["conditions"] = {
            cond: _aggregate(by_condition[cond], args.collar)
            for cond in order
            if cond in by_condition
        }

    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        for rec in common:
            line = _der_line(f"recording={rec}", doc["recordings"][rec])
            if args.jer:
                line += f" jer={doc['recordings'][rec]['jer']:.6f}"
            print(line)
        if "conditions" in doc:
            for cond, rep in doc["conditions"].items():
                print(_der_line(f"condition={cond}", rep))
        print(_der_line("overall", doc["overall"]))
    if missing:
        print(f"note: no hypothesis for {len(missing)} recording(s): {', '.join(missing)}",
              file=sys.stderr)
    return 0


# --- cpwer ---------------------------------------------------------------------


def _load_transcript_set(path: str) -> dict[str, dict[str, rttm.SpeakerTranscript]]:
    if os.path.isdir(path):
        out = {}
        for name in sorted(os.listdir(path)):
            if not name.endswith(".txt"):
                continue
            rec = name[: -len(".txt")]
            if rec.endswith(".trans"):
                rec = rec[: -len(".trans")]
            with open(os.path.join(path, name), "r", encoding="utf-8") as fh:
                out[rec] = rttm.parse_transcripts(fh, rec)
        return out
    rec = os.path.splitext(os.path.basename(path))[0]
    with open(path, "r", encoding="utf-8") as fh:
        return {rec: rttm.parse_transcripts(fh, rec)}


def cmd_cpwer(args: argparse.Namespace) -> int:
    refs = _load_transcript_set(args.ref)
    hyps = _load_transcript_set(args.hyp)
    if os.path.isdir(args.ref) != os.path.isdir(args.hyp):
        return _err("--ref and --hyp must both be files or both be directories")
    if not os.path.isdir(args.ref) and len(refs) == 1 and len(hyps) == 1:
        # single-file mode: pair them up regardless of file names
        hyps = {next(iter(refs)): next(iter(hyps.values()))}
    common = sorted(set(refs) & set(hyps))
    if not common:
        return _err("no recordings in common between --ref and --hyp")
    doc: dict = {"recordings": {}}
    totals = {"substitutions": 0, "deletions": 0, "insertions": 0, "ref_words": 0}
    for rec in common:
        rep = metrics.cpwer(refs[rec], hyps[rec])
        doc["recordings"][rec] = rep.to_dict()
        totals["substitutions"] += rep.substitutions
        totals["deletions"] += rep.deletions
        totals["insertions"] += rep.insertions
        totals["ref_words"] += rep.ref_words
    errors = totals["substitutions"] + totals["deletions"] + totals["insertions"]
    doc["overall"] = dict(totals, cpwer=errors / totals["ref_words"])
    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        for rec in common:
            rep = doc["recordings"][rec]
            print(
                f"recording={rec} cpwer={rep['cpwer']:.6f} sub={rep['substitutions']} "
                f"del={rep['deletions']} ins={rep['insertions']} ref_words={rep['ref_words']}"
            )
        print(f"overall cpwer={doc['overall']['cpwer']:.6f} ref_words={totals['ref_words']}")
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsdiar",
        description="Target-speaker diarization decoding toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic session corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--speakers", type=int, required=True)
    p.add_argument("--duration", type=float, default=600.0, help="seconds per session")
    p.add_argument("--overlap", type=float, default=0.0, help="target overlap ratio in [0, 0.45]")
    p.add_argument("--silence", choices=("short", "long"), default="short")
    p.add_argument("--conditions", help="comma list like 0L,0S,10,20,30,40 (overrides --overlap/--silence)")
    p.add_argument("--sessions", type=int, default=1, help="number of sessions to generate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb-styles", default=",".join(simulate.PERTURB_STYLES),
                   help="comma list of hypothesis perturbation styles (empty for none)")
    p.add_argument("--perturb-der", type=float, default=0.2)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fuse", help="align and fuse diarization hypotheses")
    p.add_argument("--hyp", action="append", required=True, metavar="RTTM[:WEIGHT]",
                   help="repeatable; first file is the label-space anchor")
    p.add_argument("--out", required=True, help="fused RTTM path")
    p.add_argument("--soft-out", help="write per-frame fused weights (.npz)")
    p.add_argument("--step", type=float, default=0.010, help="fusion frame step in seconds")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--sole-speaker", action="store_true",
                   help="keep only frames where exactly one speaker passes the threshold")
    p.add_argument("--min-turn", type=float, default=0.0)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("decode", help="run iterative target-speaker decoding")
    p.add_argument("--features", help="feature stream file")
    p.add_argument("--init", help="initial hypothesis RTTM")
    p.add_argument("--out", required=True, help="output RTTM path")
    p.add_argument("--model", choices=("oracle-noisy", "posterior-file"), default="oracle-noisy")
    p.add_argument("--oracle-rttm", help="ground-truth RTTM backing the oracle-noisy model")
    p.add_argument("--flip-prob", type=float, default=0.0)
    p.add_argument("--smear-frames", type=int, default=0)
    p.add_argument("--match-threshold", type=float, default=0.8)
    p.add_argument("--model-seed", type=int, default=0)
    p.add_argument("--posterior", help="precomputed T x N posterior .npz (posterior-file model)")
    p.add_argument("--pool", help="profile pool file for dummy padding")
    p.add_argument("--pool-size", type=int, help="synthesize a pool of this size instead")
    p.add_argument("--config", help="INI config file with a [decode] section")
    p.add_argument("--capacity", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--binarize-threshold", type=float)
    p.add_argument("--median-frames", type=int)
    p.add_argument("--min-turn", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--recording", help="recording id when files hold several")
    p.add_argument("--ref", help="reference RTTM: print a DER report per iteration")
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("score", help="score hypothesis RTTM against reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--uem", help="UEM scoring regions")
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--jer", action="store_true", help="also report JER")
    p.add_argument("--manifest", help="corpus manifest for a per-condition breakdown")
    p.add_argument("--jobs", type=int, default=1, help="recordings scored in parallel")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("cpwer", help="concatenated minimum-permutation WER over transcripts")
    p.add_argument("--ref", required=True, help="transcript file or directory")
    p.add_argument("--hyp", required=True, help="transcript file or directory")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_cpwer)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate":
        if not (0.0 <= args.overlap <= 0.45):
            parser.error(f"--overlap must lie in [0, 0.45], got {args.overlap}")
        if args.speakers < 1:
            parser.error("--speakers must be >= 1")
        if args.sessions < 1:
            parser.error("--sessions must be >= 1")
    try:
        return args.func(args)
    except (ValueError, CalibrationError, OSError) as exc:
        return _err(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
