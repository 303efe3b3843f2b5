"""Command-line interface for the data-driven LQ-integral toolkit.

Subcommands cover the pipeline stages: ``collect`` gathers excitation
data and reports the rank check, ``check`` runs the structural
preflight, ``synth-sdp`` and ``synth-pg`` synthesize a gain by the
semidefinite program or the projected gradient flow, ``track``
simulates tracking scenarios, and ``dgu-demo`` runs the full microgrid
demonstration.

Exit codes are distinct per failure family: 0 success, 2 configuration
problem, 3 failed rank or structural-assumption check, 4 solver
non-convergence, 5 invalid domain (non-stabilizing gains, out-of-range
parameters, inconsistent data).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import yaml

from . import protocol
from .configio import (format_number, load_config, merge_config, pack_to_text,
                       write_csv)
from .data import (build_covariances, check_pe_rank, collect_derivative_data,
                   collect_integral_data, random_excitation)
from .errors import (AssumptionError, ConfigError, ConsistencyError,
                     ConvergenceError, DimensionError, DomainError,
                     InfeasibleError, NumericalError, RankError,
                     SingularMatrixError)
from .flow import FlowOptions, integrate_flow
from .models import WeightSpec, check_aug_detectable, check_aug_stabilizable
from .param import (constraint_residual, gain_to_parameterizer,
                    stabilizing_gain_from_data)
from .sdp import SdpOptions, extract_gain, solve_sdp
from .tracking import (ReferenceProfile, Scenario, dgu_model, overshoot,
                       simulate_lqi, tracking_error)

__all__ = ["main"]

# configuration schemas: key -> (type, default).  Unknown keys are
# rejected, so every option is spelled out here.
_PLANT_SCHEMA = {
    "rf": (float, 0.2),
    "lf": (float, 2.0e-3),
    "cf": (float, 2.0e-3),
    "yload": (float, 0.02),
    "qx_weight": (float, 1.0),
    "qz_weight": (float, 100.0),
    "r_weight": (float, 1.0),
}
_COLLECT_SCHEMA = {
    "variant": (str, "integral"),
    "excitation_duration": (float, 1.0),
    "excitation_hold": (float, 0.02),
    "excitation_amplitude": (float, 100.0),
    "sample_interval": (float, 0.1),
    "window": (float, 0.1),
}
_SDP_SCHEMA = {
    "sdp_tol": (float, 1.0e-8),
    "sdp_eps_w": (float, 1.0e-8),
}
_FLOW_SCHEMA = {
    "flow_grad_tol": (float, 1.0e-11),
    "flow_max_steps": (int, 200_000),
}
_TRACK_SCHEMA = {
    "horizon": (float, 3.0),
    "output_dt": (float, 1.0e-3),
    "reference": (list, [[0.0, 400.0], [1.0, 600.0], [2.0, 200.0]]),
    "gain": (list, None),
}
_DEMO_SCHEMA = {
    "variant": (str, "integral"),
    "sdp_tol": (float, 1.0e-8),
    "flow_grad_tol": (float, 1.0e-11),
    "flow_max_steps": (int, 200_000),
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        return _fail(exc, 2)
    except (RankError, AssumptionError) as exc:
        return _fail(exc, 3)
    except NumericalError as exc:  # includes ConvergenceError
        return _fail(exc, 4)
    except InfeasibleError as exc:
        return _fail(exc, 4)
    except (DomainError, DimensionError, SingularMatrixError,
            ConsistencyError) as exc:
        return _fail(exc, 5)


def _fail(exc, code):
    print(f"error: {exc}", file=sys.stderr)
    return code


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ddlqi",
        description="data-driven LQ-integral control synthesis")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="YAML configuration file")
        cmd.add_argument("--seed", type=int, default=None,
                         help="RNG seed (required for randomized stages)")
        cmd.add_argument("--out", help="output directory for result files")
        cmd.add_argument("--set", action="append", metavar="KEY=VALUE",
                         dest="overrides",
                         help="override a configuration option")
        cmd.set_defaults(func=func)
        return cmd

    add("collect", _cmd_collect,
        "collect excitation data and report the rank check")
    add("check", _cmd_check,
        "run the structural and data preflight checks")
    add("synth-sdp", _cmd_synth_sdp,
        "synthesize the optimal gain via the data-driven SDP")
    add("synth-pg", _cmd_synth_pg,
        "synthesize the optimal gain via the projected gradient flow")
    track = add("track", _cmd_track, "simulate closed-loop tracking")
    track.add_argument("--fig3", action="store_true",
                       help="run the load-step suite over the gain family")
    add("dgu-demo", _cmd_demo, "run the full microgrid demonstration")
    return parser


# -- configuration plumbing ---------------------------------------------


def _resolve(args, *schemas):
    schema = {}
    for part in schemas:
        schema.update(part)
    file_values = load_config(args.config) if args.config else {}
    overrides = {}
    for pair in args.overrides or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        key, text = pair.split("=", 1)
        try:
            overrides[key.strip()] = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(
                f"cannot parse value for --set {key}: {exc}") from exc
    return merge_config(schema, file_values, overrides)


def _require_seed(args, reason):
    if args.seed is None:
        raise ConfigError(f"--seed is required: {reason}")
    return args.seed


def _require_out(args):
    if not args.out:
        raise ConfigError("--out is required for this command")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _build_model(cfg):
    try:
        return dgu_model(cfg["rf"], cfg["lf"], cfg["cf"], cfg["yload"])
    except (DomainError, DimensionError) as exc:
        raise ConfigError(f"invalid plant parameters: {exc}") from exc


def _build_weights(cfg, model):
    try:
        return WeightSpec(qx=cfg["qx_weight"] * np.eye(model.n),
                          qz=cfg["qz_weight"] * np.eye(model.p),
                          r=cfg["r_weight"] * np.eye(model.m))
    except (DomainError, DimensionError) as exc:
        raise ConfigError(f"invalid weights: {exc}") from exc


def _collect(cfg, model, seed):
    rng = np.random.default_rng(seed)
    excitation = random_excitation(
        model.m, cfg["excitation_duration"], cfg["excitation_hold"],
        cfg["excitation_amplitude"], rng)
    if cfg["variant"] == "integral":
        batch = collect_integral_data(model, excitation,
                                      cfg["sample_interval"], cfg["window"])
    elif cfg["variant"] == "derivative":
        batch = collect_derivative_data(model, excitation,
                                        cfg["sample_interval"])
    else:
        raise ConfigError(f"unknown data variant {cfg['variant']!r}")
    return excitation, batch, build_covariances(batch)


def _rank_line(rank):
    status = "OK" if rank.ok else "FAIL"
    return (f"excitation rank {rank.rank}/{rank.required} {status} "
            f"(condition {format_number(rank.condition)})")


def _print_gain(label, gain):
    entries = "  ".join(format_number(v) for v in np.ravel(gain))
    print(f"{label}: [{entries}]")


# -- subcommands --------------------------------------------------------


def _cmd_collect(args):
    cfg = _resolve(args, _PLANT_SCHEMA, _COLLECT_SCHEMA)
    seed = _require_seed(args, "data collection draws a random excitation")
    model = _build_model(cfg)
    _, batch, pack = _collect(cfg, model, seed)
    rank = check_pe_rank(pack)
    print(f"variant: {batch.variant}, samples: {batch.num_samples}, "
          f"sample interval: {format_number(batch.sample_interval)}")
    if args.out:
        out = _require_out(args)
        batch_path = os.path.join(out, "batch.csv")
        header = (["sample"]
                  + [f"u_{i + 1}" for i in range(batch.m)]
                  + [f"x_{i + 1}" for i in range(batch.n)]
                  + [f"xp_{i + 1}" for i in range(batch.n)]
                  + [f"y_{i + 1}" for i in range(batch.p)])
        rows = [[t] + list(batch.u[:, t]) + list(batch.x[:, t])
                + list(batch.xp[:, t]) + list(batch.y[:, t])
                for t in range(batch.num_samples)]
        write_csv(batch_path, header, rows)
        pack_path = os.path.join(out, "pack.txt")
        with open(pack_path, "w", encoding="utf-8") as fh:
            fh.write(pack_to_text(pack))
        print(f"wrote {batch_path}")
        print(f"wrote {pack_path}")
    else:
        print(pack_to_text(pack), end="")
    print(_rank_line(rank))
    if not rank.ok:
        raise RankError(
            "collected data is not persistently exciting",
            rank=rank.rank, required=rank.required, threshold=rank.threshold)
    return 0


def _cmd_check(args):
    cfg = _resolve(args, _PLANT_SCHEMA, _COLLECT_SCHEMA)
    seed = _require_seed(args, "the rank check collects random data")
    model = _build_model(cfg)
    weights = _build_weights(cfg, model)
    stab = check_aug_stabilizable(model)
    det = check_aug_detectable(model, weights)
    _, _, pack = _collect(cfg, model, seed)
    rank = check_pe_rank(pack)
    rows = [
        ("augmented stabilizability", stab.ok,
         f"input-coupling rank {stab.rank}/{stab.required_rank}"
         + ("" if stab.eig_ok else
            f", uncontrollable eigenvalue {stab.failing_eigenvalue}")),
        ("cost detectability", det.ok,
         "" if det.ok else
         f"cost-invisible eigenvalue {det.failing_eigenvalue}"),
        ("excitation rank", rank.ok,
         f"rank {rank.rank}/{rank.required}, "
         f"condition {format_number(rank.condition)}"),
    ]
    width = max(len(name) for name, _, _ in rows)
    for name, ok, detail in rows:
        status = "PASS" if ok else "FAIL"
        line = f"{name:<{width}}  {status}"
        if detail:
            line += f"  {detail}"
        print(line)
    if not all(ok for _, ok, _ in rows):
        return 3
    return 0


def _cmd_synth_sdp(args):
    cfg = _resolve(args, _PLANT_SCHEMA, _COLLECT_SCHEMA, _SDP_SCHEMA)
    seed = _require_seed(args, "synthesis collects random data")
    model = _build_model(cfg)
    weights = _build_weights(cfg, model)
    _, _, pack = _collect(cfg, model, seed)
    rank = check_pe_rank(pack)
    print(_rank_line(rank))
    if not rank.ok:
        raise RankError("collected data is not persistently exciting",
                        rank=rank.rank, required=rank.required,
                        threshold=rank.threshold)
    options = SdpOptions(tol=cfg["sdp_tol"], eps_w=cfg["sdp_eps_w"])
    solution = solve_sdp(pack, weights, options)
    gain = extract_gain(pack, solution)
    _print_gain("gain", gain)
    print(f"objective: {format_number(solution.objective)}")
    print(f"duality gap estimate: "
          f"{format_number(solution.duality_gap_estimate)}")
    print(f"equality residual: {format_number(solution.equality_residual)}")
    print(f"converged: {solution.converged} "
          f"({solution.barrier_iterations} barrier rounds, "
          f"{solution.newton_iterations} Newton steps)")
    if args.out:
        out = _require_out(args)
        gain_path = os.path.join(out, "gain_sdp.csv")
        write_csv(gain_path,
                  [f"k_{j + 1}" for j in range(gain.shape[1])],
                  [list(gain[0])])
        diag_path = os.path.join(out, "sdp_diagnostics.csv")
        keys = list(solution.diagnostics[0].keys())
        write_csv(diag_path, keys,
                  [[str(entry[k]) if isinstance(entry[k], bool)
                    else entry[k] for k in keys]
                   for entry in solution.diagnostics])
        print(f"wrote {gain_path}")
        print(f"wrote {diag_path}")
    return 0


def _cmd_synth_pg(args):
    cfg = _resolve(args, _PLANT_SCHEMA, _COLLECT_SCHEMA, _FLOW_SCHEMA)
    seed = _require_seed(args, "synthesis collects random data")
    model = _build_model(cfg)
    weights = _build_weights(cfg, model)
    _, _, pack = _collect(cfg, model, seed)
    rank = check_pe_rank(pack)
    print(_rank_line(rank))
    if not rank.ok:
        raise RankError("collected data is not persistently exciting",
                        rank=rank.rank, required=rank.required,
                        threshold=rank.threshold)
    g0 = gain_to_parameterizer(pack, stabilizing_gain_from_data(pack))
    options = FlowOptions(grad_tol=cfg["flow_grad_tol"],
                          max_steps=cfg["flow_max_steps"])
    traj = integrate_flow(pack, weights, g0, options)
    if cfg["flow_grad_tol"] > 0 and traj.status != "gradient-converged":
        raise ConvergenceError(
            f"gradient flow stopped with status {traj.status!r} at "
            f"gradient norm {traj.final_grad_norm:.3e} after "
            f"{traj.steps} steps", best=traj.final_gain,
            iterations=traj.steps)
    gain = traj.final_gain
    _print_gain("gain", gain)
    print(f"cost: {format_number(traj.final_cost)}")
    print(f"gradient norm: {format_number(traj.final_grad_norm)}")
    print(f"constraint residual: "
          f"{format_number(constraint_residual(pack, traj.final_g))}")
    print(f"steps: {traj.steps} ({traj.status})")
    if args.out:
        out = _require_out(args)
        gain_path = os.path.join(out, "gain_pg.csv")
        write_csv(gain_path,
                  [f"k_{j + 1}" for j in range(gain.shape[1])],
                  [list(gain[0])])
        traj_path = os.path.join(out, "flow_trajectory.csv")
        last = len(traj.samples) - 1
        rows = [[s.step_index, s.time, s.cost, s.grad_norm]
                for i, s in enumerate(traj.samples)
                if i % 20 == 0 or i == last]
        write_csv(traj_path, ["step", "flow_time", "cost", "grad_norm"],
                  rows)
        print(f"wrote {gain_path}")
        print(f"wrote {traj_path}")
    return 0


def _cmd_track(args):
    cfg = _resolve(args, _PLANT_SCHEMA, _COLLECT_SCHEMA, _SDP_SCHEMA,
                   _TRACK_SCHEMA)
    out = _require_out(args)
    model = _build_model(cfg)
    weights = _build_weights(cfg, model)

    if cfg["gain"] is not None:
        gain = _parse_gain(cfg["gain"], model)
    else:
        seed = _require_seed(
            args, "no gain was supplied, so one is synthesized from "
            "randomly collected data")
        _, _, pack = _collect(cfg, model, seed)
        rank = check_pe_rank(pack)
        if not rank.ok:
            raise RankError("collected data is not persistently exciting",
                            rank=rank.rank, required=rank.required,
                            threshold=rank.threshold)
        solution = solve_sdp(pack, weights,
                             SdpOptions(tol=cfg["sdp_tol"],
                                        eps_w=cfg["sdp_eps_w"]))
        gain = extract_gain(pack, solution)
        _print_gain("synthesized gain", gain)

    if args.fig3:
        return _track_fig3(cfg, out, gain)
    return _track_reference(cfg, out, model, gain)


def _parse_gain(raw, model):
    try:
        gain = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"gain option is not numeric: {exc}") from exc
    gain = np.atleast_2d(gain)
    expected = (model.m, model.n + model.p)
    if gain.shape != expected:
        raise ConfigError(
            f"gain option must have shape {expected}, got {gain.shape}")
    return gain


def _parse_reference(raw):
    try:
        return ReferenceProfile([(float(t), v) for t, v in raw])
    except (TypeError, ValueError, DomainError, DimensionError) as exc:
        raise ConfigError(
            f"reference option must be a list of [time, value] pairs "
            f"with strictly increasing times starting at 0: {exc}") from exc


def _track_reference(cfg, out, model, gain):
    reference = _parse_reference(cfg["reference"])
    try:
        scenario = Scenario(model, reference, cfg["horizon"],
                            cfg["output_dt"], initial_state="equilibrium")
    except (DomainError, DimensionError) as exc:
        raise ConfigError(f"invalid tracking scenario: {exc}") from exc
    record = simulate_lqi(scenario, gain)
    path = os.path.join(out, "track.csv")
    protocol._write_tracking_csv(path, record, stride=1)
    print(f"wrote {path}")
    err = tracking_error(record)
    for t_b in reference.change_times(cfg["horizon"]) + [cfg["horizon"]]:
        idx = record.sample_index(t_b - cfg["output_dt"] / 2)
        level = max(abs(record.r[:, idx]).max(), 1.0)
        print(f"relative error before t={format_number(t_b)}: "
              f"{format_number(err[idx] / level)}")
    if not record.stable_throughout:
        bad = [s for s in record.segments if not s["hurwitz"]]
        print(f"warning: closed loop not Hurwitz in {len(bad)} segment(s)",
              file=sys.stderr)
    return 0


def _track_fig3(cfg, out, gain):
    opts = protocol.DemoOptions(output_dt=cfg["output_dt"])
    gains = protocol.detuned_gains()
    dt = cfg["output_dt"]
    windows = [("load_step_0.5s", 0.5, 1.5 - dt),
               ("ref_step_1.5s", 1.5, 2.5 - dt),
               ("load_step_2.5s", 2.5, 3.0)]
    rows = []
    for name, k in [("kstar", gain)] + sorted(gains.items()):
        record = simulate_lqi(protocol._fig3_scenario(opts), k)
        path = os.path.join(out, f"fig3_{name}.csv")
        protocol._write_tracking_csv(path, record, stride=1)
        print(f"wrote {path}")
        for label, a, b in windows:
            rows.append([name, label, overshoot(record, a, b)])
    summary = os.path.join(out, "fig3_overshoot.csv")
    write_csv(summary, ["gain", "event", "overshoot"], rows)
    print(f"wrote {summary}")
    return 0


def _cmd_demo(args):
    cfg = _resolve(args, _DEMO_SCHEMA)
    seed = _require_seed(args, "the demonstration collects random data")
    out = _require_out(args)
    options = protocol.DemoOptions(
        variant=cfg["variant"],
        flow_grad_tol=cfg["flow_grad_tol"],
        flow_max_steps=cfg["flow_max_steps"],
        sdp=SdpOptions(tol=cfg["sdp_tol"]))
    result = protocol.run_dgu_demo(out, seed=seed, options=options)
    _print_gain("gain (SDP route)", result.gain_sdp)
    _print_gain("gain (flow route)", result.gain_flow)
    _print_gain("gain (Riccati check)", result.gain_care)
    print(f"|K_sdp - K_riccati|_F: {format_number(result.care_distance)}")
    print(f"|K_sdp - K_flow|_F: {format_number(result.route_gap)}")
    for label, value in result.steady_state_errors.items():
        print(f"steady-state error {label}: {format_number(value)}")
    for path in result.files:
        print(f"wrote {path}")
    timing = "  ".join(f"{k}={v:.2f}s" for k, v in result.timings.items())
    print(f"timings: {timing}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
