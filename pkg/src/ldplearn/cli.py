"""Command-line front end: norm computations, witnesses, hard families,
protocol simulation, parameter sweeps, and privacy audits.

Every command is deterministic given its seed: result files are
byte-identical across re-runs, and volatile details (timestamps, the exact
command line) go to a ``<out>.meta.json`` sidecar instead.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import hardness, learners, zoo
from .model import (
    ConceptClass,
    LabeledDistribution,
    build_concept_matrix,
    build_difference_matrix,
    dump_json,
    load_json,
    population_loss,
    sample,
)
from .norms import SdpSettings, agnostic_dual_witness, eta, eta_dual_witness, gamma2_approx
from .protocol import PrivacyParams, RandomizerSpec, audit_privacy

TASKS = ("agnostic-learn", "agnostic-refute", "realizable-learn", "realizable-refute")


def _load_config(path) -> dict:
    if path is None:
        return {}
    text = open(path, "rb").read()
    if str(path).endswith(".toml"):
        return tomllib.loads(text.decode())
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return tomllib.loads(text.decode())


def _effective(args, defaults: dict) -> dict:
    """Merge config-file values under explicit flags (flags win)."""
    cfg = _load_config(args.config)
    merged = dict(cfg)
    if "class" in merged:  # config files may use the flag name
        merged.setdefault("cls", merged.pop("class"))
    for key, value in vars(args).items():
        if key in ("config", "fn", "command"):
            continue
        if value is not None:
            merged[key] = value
    for key, value in defaults.items():
        merged.setdefault(key, value)
    return merged


def _resolve_class(spec: str) -> ConceptClass:
    if spec.startswith("@"):
        obj = load_json(spec[1:])
        return ConceptClass(obj["domain"], obj["concepts"])
    name, _, size = spec.rpartition(":")
    if not name:
        raise ValueError(f"class spec {spec!r} must look like 'thresholds:4'")
    return zoo.make_class(name, int(size))


def _emit(obj: dict, out, meta: dict) -> None:
    if out is None:
        json.dump(obj, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        dump_json(obj, out)
        dump_json(meta, f"{out}.meta.json")


def _meta(cmd: str, eff: dict) -> dict:
    return {
        "command": cmd,
        "effective_config": {k: v for k, v in sorted(eff.items()) if v is not None},
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "argv": sys.argv[1:],
    }


def _settings(eff: dict) -> SdpSettings:
    return SdpSettings(seed=int(eff.get("seed", 0) or 0))


# ---------------------------------------------------------------------------
# Commands


def cmd_gamma2(args) -> int:
    eff = _effective(args, {"alpha": 0.1})
    cls = _resolve_class(eff["cls"])
    alpha = float(eff["alpha"])
    value, M_tilde, fact = gamma2_approx(build_concept_matrix(cls), alpha, _settings(eff))
    result = {
        "value": value,
        "alpha": alpha,
        "residual_inf": fact.residual_inf,
        "R": fact.R.to_json(),
        "A": fact.A.to_json(),
    }
    _emit(result, eff.get("out"), _meta("gamma2", eff))
    print(f"gamma2(W, {alpha}) = {value:.6f} (residual {fact.residual_inf:.2e})")
    return 0


def cmd_eta(args) -> int:
    eff = _effective(args, {"alpha": 0.1})
    cls = _resolve_class(eff["cls"])
    alpha = float(eff["alpha"])
    sol = eta(cls, alpha, _settings(eff))
    result = {
        "value": sol.value,
        "alpha": alpha,
        "theta": sol.theta,
        "gap": sol.gap,
        "W_tilde": sol.W_tilde.to_json(),
    }
    _emit(result, eff.get("out"), _meta("eta", eff))
    print(f"eta(C, {alpha}) = {sol.value:.6f} (gap {sol.gap:.2e})")
    return 0


def cmd_witness(args) -> int:
    eff = _effective(args, {"alpha": 0.1, "task": "agnostic"})
    cls = _resolve_class(eff["cls"])
    alpha = float(eff["alpha"])
    settings = _settings(eff)
    if eff["task"] == "agnostic":
        w = agnostic_dual_witness(build_difference_matrix(cls), alpha, settings)
    else:
        w = eta_dual_witness(cls, alpha, settings)
    result = {
        "task": eff["task"],
        "alpha": alpha,
        "objective": w.objective,
        "gamma2_star": w.gamma2_star,
        "U": w.U.to_json(),
    }
    _emit(result, eff.get("out"), _meta("witness", eff))
    print(f"{eff['task']} witness objective {w.objective:.6f}, gamma2* {w.gamma2_star:.6f}")
    return 0


def cmd_hardfamily(args) -> int:
    eff = _effective(args, {"alpha": 0.1, "task": "agnostic"})
    cls = _resolve_class(eff["cls"])
    alpha = float(eff["alpha"])
    settings = _settings(eff)
    if eff["task"] == "agnostic":
        w = agnostic_dual_witness(build_difference_matrix(cls), alpha, settings)
        fam = hardness.build_agnostic_family(w, cls)
        refined = hardness.refine_agnostic_family(fam, alpha, settings)
        result = {
            "base": fam.to_json(),
            "refined": refined.family.to_json(),
            "binning": {
                "S": [list(p) for p in refined.binning.S],
                "score": refined.binning.score,
                "bin_index": refined.binning.bin_index,
            },
            "tau": refined.tau,
            "diagnostics": refined.diagnostics,
        }
    else:
        w = eta_dual_witness(cls, alpha, settings)
        fam = hardness.build_realizable_family(w.U, cls, alpha)
        refined = hardness.refine_realizable_family(fam, alpha, settings)
        result = {
            "base": fam.to_json(),
            "refined": refined.family.to_json(),
            "binning": {
                "S": list(refined.binning.S),
                "score": refined.binning.score,
                "bin_index": refined.binning.bin_index,
            },
            "tau": refined.tau,
            "diagnostics": refined.diagnostics,
        }
        try:
            mixed = hardness.mix_sigma(refined.family)
            result["mixed"] = mixed.to_json()
        except hardness.ConstructionError as e:
            result["mixed_error"] = str(e)
    _emit(result, eff.get("out"), _meta("hardfamily", eff))
    print(f"{eff['task']} hard family on {eff['cls']}: tau={result['tau']:.4f}")
    return 0


def _task_objects(eff, cls, settings):
    config = learners.TaskConfig(
        alpha=float(eff["alpha"]),
        beta=float(eff["beta"]),
        epsilon=float(eff["epsilon"]),
        theta=float(eff.get("theta", 0.0)),
        c0=float(eff.get("c0", learners.DEFAULT_C0)),
        randomizer=eff.get("randomizer", "coord-rr"),
    )
    task = eff["task"]
    if task.startswith("agnostic"):
        plan = learners.prepare_agnostic(cls, config, settings)
        n = learners.required_sample_size("agnostic", cls, config, gamma=plan.gamma)
    else:
        plan = learners.prepare_realizable(cls, config, settings)
        n = learners.required_sample_size(
            "realizable", cls, config, gamma=plan.solution.value
        )
    if eff.get("n"):
        n = int(eff["n"])
    return config, plan, n


def _target_distribution(eff, cls, seed) -> LabeledDistribution:
    """Uniform marginal labeled by a target concept, uniform random labels,
    or a distribution file."""
    target = eff.get("target", "uniform")
    if str(target).startswith("@"):
        return LabeledDistribution.from_json(load_json(str(target)[1:]))
    marginal = np.full(cls.num_points, 1.0 / cls.num_points)
    if target == "uniform":
        probs = np.column_stack([marginal / 2, marginal / 2])
        return LabeledDistribution(cls.domain, probs)
    return LabeledDistribution.labeled_by(cls.domain, marginal, cls.vector(target))


def _run_task(task, cls, config, plan, data, seed):
    if task == "agnostic-learn":
        return learners.agnostic_learn(cls, data, config, seed, plan=plan), 0
    if task == "agnostic-refute":
        verdict = learners.agnostic_refute(cls, data, config, seed, plan=plan)
        return verdict, 0 if verdict == 1 else 1
    if task == "realizable-learn":
        return learners.realizable_learn(cls, data, config, seed, plan=plan), 0
    verdict = learners.realizable_refute(cls, data, config, seed, plan=plan)
    return verdict, 0 if verdict == 1 else 1


def cmd_simulate(args) -> int:
    eff = _effective(
        args,
        {"alpha": 0.1, "beta": 0.1, "epsilon": 1.0, "seed": 0, "task": "agnostic-learn"},
    )
    cls = _resolve_class(eff["cls"])
    settings = _settings(eff)
    config, plan, n = _task_objects(eff, cls, settings)
    seed = int(eff["seed"])
    dist = _target_distribution(eff, cls, seed)
    data = sample(dist, n, seed)
    try:
        outcome, code = _run_task(eff["task"], cls, config, plan, data, seed + 1)
    except learners.NotRealizableError as e:
        _emit({"task": eff["task"], "n": n, "error": str(e)}, eff.get("out"),
              _meta("simulate", eff))
        print(f"{eff['task']}: {e}")
        return 1
    if isinstance(outcome, learners.LearnOutcome):
        result = {"task": eff["task"], "n": n, "outcome": outcome.to_json()}
        chosen = outcome.chosen
        result["population_loss"] = population_loss(dist, cls.vector(chosen))
        print(
            f"{eff['task']}: n={n} chose {chosen} "
            f"(true loss {result['population_loss']:.4f})"
        )
    else:
        result = {"task": eff["task"], "n": n, "verdict": outcome}
        print(f"{eff['task']}: n={n} verdict {outcome:+d}")
    _emit(result, eff.get("out"), _meta("simulate", eff))
    return code


def cmd_sweep(args) -> int:
    eff = _effective(
        args,
        {
            "alpha": 0.1,
            "beta": 0.1,
            "epsilon": 1.0,
            "seed": 0,
            "trials": 10,
            "task": "agnostic-learn",
        },
    )
    trials = int(eff["trials"])
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cls = _resolve_class(eff["cls"])
    settings = _settings(eff)
    config, plan, n_default = _task_objects(eff, cls, settings)
    grid = [int(x) for x in str(eff.get("n_grid") or n_default).split(",")]
    seed0 = int(eff["seed"])
    dist = _target_distribution(eff, cls, seed0)
    rows = []
    for point_id, n in enumerate(grid):
        successes, losses = 0, []
        for trial in range(trials):
            seed = seed0 + 1000003 * point_id + trial
            data = sample(dist, n, seed)
            t0 = time.perf_counter()
            try:
                outcome, _ = _run_task(eff["task"], cls, config, plan, data, seed + 7)
                err = None
            except learners.NotRealizableError:
                outcome, err = None, "not-realizable"
            ms = (time.perf_counter() - t0) * 1000
            if isinstance(outcome, learners.LearnOutcome):
                loss = population_loss(dist, cls.vector(outcome.chosen))
                ok = loss <= config.alpha
                label = outcome.chosen
            elif outcome is None:
                loss, ok, label = float("nan"), False, err
            else:
                loss, ok, label = float("nan"), outcome == 1, f"{outcome:+d}"
            successes += ok
            losses.append(loss)
            rows.append(
                [point_id, n, config.epsilon, config.alpha, trial, label,
                 f"{loss:.6f}", f"{ms:.3f}"]
            )
        mean_loss = float(np.nanmean(losses)) if losses else float("nan")
        rows.append(
            ["summary", n, config.epsilon, config.alpha, -1,
             f"success_rate={successes / trials:.4f}", f"{mean_loss:.6f}", ""]
        )
    out = eff.get("out")
    writer = csv.writer(open(out, "w", newline="")) if out else csv.writer(sys.stdout)
    writer.writerow(
        ["point_id", "n", "epsilon", "alpha", "trial", "outcome", "achieved_loss", "runtime_ms"]
    )
    writer.writerows(rows)
    if out:
        dump_json(_meta("sweep", eff), f"{out}.meta.json")
    print(f"sweep complete: {len(grid)} point(s) x {trials} trial(s)")
    return 0


def cmd_audit(args) -> int:
    eff = _effective(
        args, {"alpha": 0.1, "epsilon": 1.0, "randomizer": "coord-rr", "task": "agnostic"}
    )
    cls = _resolve_class(eff["cls"])
    alpha = float(eff["alpha"])
    epsilon = float(eff["epsilon"])
    settings = _settings(eff)
    if eff["task"] == "agnostic":
        _, _, fact = gamma2_approx(build_concept_matrix(cls), alpha, settings)
    else:
        fact = eta(cls, alpha, settings).factorization
    spec = RandomizerSpec(eff["randomizer"], fact.A)
    report = audit_privacy(spec, PrivacyParams(epsilon))
    result = {
        "epsilon": epsilon,
        "randomizer": eff["randomizer"],
        "max_log_ratio": report.max_log_ratio,
        "analytic": report.analytic,
        "pass": bool(report.max_log_ratio <= epsilon + 1e-9),
    }
    _emit(result, eff.get("out"), _meta("audit", eff))
    tag = "analytic" if report.analytic else "enumerated"
    print(f"audit ({tag}): max log-ratio {report.max_log_ratio:.9f} <= {epsilon}")
    return 0 if result["pass"] else 1


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--class", dest="cls", help="zoo spec 'name:size' or '@file.json'")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--n-grid", dest="n_grid")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--c0", type=float)
    p.add_argument("--randomizer", choices=["coord-rr", "laplace-l1"])
    p.add_argument("--task")
    p.add_argument("--target")
    p.add_argument("--out")
    p.add_argument("--config", help="TOML or JSON file with the same keys")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldplearn",
        description="Private learning under non-interactive local DP: norms, "
        "protocols, hard instances, experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(fn=fn)
    return parser


COMMANDS = {
    "gamma2": cmd_gamma2,
    "eta": cmd_eta,
    "witness": cmd_witness,
    "hardfamily": cmd_hardfamily,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "audit": cmd_audit,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:  # noqa: BLE001 - uniform error contract
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
