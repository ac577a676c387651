"""Batch front end: config parsing, run orchestration, and tabular output.

Configs are INI files with one block per concern::

    [model]
    topology = single-feedback
    tau = 5.0
    [node.1]
    omega = 0.5
    delta = 0.0
    gamma_l = 0.5
    gamma_r = 0.5
    phi = 3.141592653589793
    [numerics]
    dt = 0.05
    chi_max = 50
    svd_cutoff = 1e-12
    [task]
    kind = evolve
    t_final = 25.0
    [output]
    dir = out

Supported task kinds: evolve, steady, spectrum, g2, entropy-scan,
meanfield, multinode.  Outputs are CSV files with a metadata header (full
config echo, code version, discarded-weight and lambda-drift summaries).
Runs are deterministic given the config; there is no randomized
initialization anywhere in the pipeline.

Exit codes: 0 success, 2 config error, 3 numerical-accuracy error,
4 resource-guard violation.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .contraction import ContractionInfo, split_time
from .errors import AccuracyError, ConfigError, FeedbackTNError, ResourceGuardError
from .meanfield import mf_steady_state, mf_transient, uhlmann_fidelity
from .model import (
    NetworkSpec,
    NodeSpec,
    SimParams,
    make_two_level_node,
    validate_network,
)
from .mpso import load_mpso, save_mpso
from .multinode import multinode_reduced_state, partial_trace
from .observables import entropy_scan, steady_g2, steady_spectrum
from .propagator import ChainSpec, evolve_propagator
from .steady import steady_pipeline
from .superop import vec
from .verify import run_verification

TASKS = ("evolve", "steady", "spectrum", "g2", "entropy-scan", "meanfield",
         "multinode")


@dataclass
class RunConfig:
    """Parsed and validated run configuration."""

    net: NetworkSpec
    sim: SimParams
    task: str
    task_options: dict
    output_dir: Path
    raw_lines: list[str] = field(default_factory=list)


def _get(section, key, cast, default=None, where=""):
    if key not in section:
        if default is not None:
            return default
        raise ConfigError(f"missing key {key!r} in section [{where}]")
    try:
        return cast(section[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}.{key}: {exc}") from exc


def parse_config(path: str | Path) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "model" not in parser:
        raise ConfigError("missing [model] section")
    model = parser["model"]
    topology = _get(model, "topology", str, "single-feedback", where="model")
    tau = _get(model, "tau", float, where="model")

    nodes: list[NodeSpec] = []
    idx = 1
    while f"node.{idx}" in parser:
        sec = parser[f"node.{idx}"]
        nodes.append(
            make_two_level_node(
                omega=_get(sec, "omega", float, 0.0, where=f"node.{idx}"),
                delta=_get(sec, "delta", float, 0.0, where=f"node.{idx}"),
                gamma_l=_get(sec, "gamma_l", float, where=f"node.{idx}"),
                gamma_r=_get(sec, "gamma_r", float, where=f"node.{idx}"),
                phi=_get(sec, "phi", float, 0.0, where=f"node.{idx}"),
                label=f"node{idx}",
            )
        )
        idx += 1
    if not nodes:
        raise ConfigError("no [node.N] sections found")

    if "numerics" not in parser:
        raise ConfigError("missing [numerics] section")
    num = parser["numerics"]
    try:
        sim = SimParams(
            dt=_get(num, "dt", float, where="numerics"),
            chi_max=_get(num, "chi_max", int, 100, where="numerics"),
            svd_cutoff=_get(num, "svd_cutoff", float, 1e-12, where="numerics"),
            trotter_order=_get(num, "trotter_order", int, 1, where="numerics"),
        )
        net = NetworkSpec(nodes=tuple(nodes), tau=tau, topology=topology)
        net, sim = validate_network(net, sim)
    except FeedbackTNError as exc:
        raise ConfigError(str(exc)) from exc

    if "task" not in parser:
        raise ConfigError("missing [task] section")
    task_sec = parser["task"]
    kind = _get(task_sec, "kind", str, where="task")
    if kind not in TASKS:
        raise ConfigError(f"unknown task kind {kind!r}; expected one of {TASKS}")
    options = dict(task_sec)
    out_dir = Path(parser["output"].get("dir", "out")) if "output" in parser \
        else Path("out")

    raw_lines = []
    for name in parser.sections():
        raw_lines.append(f"[{name}]")
        for key, val in parser[name].items():
            raw_lines.append(f"{key} = {val}")
    return RunConfig(
        net=net, sim=sim, task=kind, task_options=options,
        output_dir=out_dir, raw_lines=raw_lines,
    )


def _metadata_header(cfg: RunConfig, extra: dict) -> list[str]:
    lines = [f"# feedbacktn {__version__}"]
    for raw in cfg.raw_lines:
        lines.append(f"# {raw}")
    for key, val in extra.items():
        lines.append(f"# {key} = {val}")
    return lines


def _write_csv(path: Path, header_lines: list[str], columns: list[str],
               rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12e}"
    return str(x)


def _initial_state(cfg: RunConfig) -> np.ndarray:
    """Joint initial state from the task options (default: all ground)."""
    n = cfg.net.n
    labels = cfg.task_options.get("initial", ",".join(["g"] * n)).split(",")
    if len(labels) != n:
        raise ConfigError(f"initial state needs {n} comma-separated labels")
    rho = None
    for lab in labels:
        lab = lab.strip().lower()
        if lab == "g":
            local = np.array([[1, 0], [0, 0]], dtype=complex)
        elif lab == "e":
            local = np.array([[0, 0], [0, 1]], dtype=complex)
        elif lab == "mixed":
            local = np.eye(2, dtype=complex) / 2
        else:
            raise ConfigError(f"unknown initial state label {lab!r}")
        rho = local if rho is None else np.kron(rho, local)
    return rho


def _chain_fingerprint(cfg: RunConfig) -> str:
    blob = repr([
        [(n.hamiltonian.tolist(), n.jump_l.tolist(), n.jump_r.tolist())
         for n in cfg.net.nodes],
        cfg.net.tau, cfg.net.topology, cfg.sim.dt, cfg.sim.chi_max,
        cfg.sim.svd_cutoff, cfg.sim.trotter_order,
    ]).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _readout_times(cfg: RunConfig, t_final: float) -> np.ndarray:
    stride = int(cfg.task_options.get("readout_stride", "1"))
    step = cfg.sim.dt * stride
    n_pts = int(np.floor(t_final / step + 1e-9)) + 1
    return np.arange(n_pts) * step


def task_evolve(cfg: RunConfig, checkpoint_dir: Path | None, resume: bool) -> Path:
    """Single-node transient: one evolution per propagator length with
    trace-out reuse across readout times."""
    t_final = float(cfg.task_options.get("t_final", 10 * cfg.net.tau))
    times = _readout_times(cfg, t_final)
    rho0 = _initial_state(cfg)
    info = ContractionInfo()
    rows = []
    max_disc = 0.0
    cache: dict[tuple[int, float], object] = {}
    fingerprint = _chain_fingerprint(cfg)
    for t in times:
        if t == 0.0:
            rho = rho0.copy()
        else:
            rho = _reduced_state_cached(
                cfg, t, rho0, info, cache, checkpoint_dir, resume, fingerprint
            )
            max_disc = max(max_disc, info.discarded_weight)
        rows.append((t, rho[1, 1].real, rho[0, 1].real, rho[0, 1].imag))
    header = _metadata_header(cfg, {
        "discarded_weight_max": f"{max_disc:.3e}",
        "trace_defect_last": f"{info.trace_defect:.3e}",
    })
    out = cfg.output_dir / "evolve.csv"
    _write_csv(out, header, ["t", "rho_ee", "re_rho_ge", "im_rho_ge"], rows)
    return out


def _reduced_state_cached(cfg, t, rho0, info, cache, checkpoint_dir, resume,
                          fingerprint):
    """reduced_state with propagator reuse: evolve each (m, r) pair once,
    deriving shorter chains by trace-out."""
    from .contraction import spiral_contract, _hermitize_normalize

    m, r = split_time(t, cfg.net.tau)
    key_low = ("low", m, round(r, 12))
    key_up = ("up", m - 1, round(cfg.net.tau - r, 12))
    for key, m_want, dur in ((key_low, m, r), (key_up, m - 1, cfg.net.tau - r)):
        if key in cache or m_want < 1:
            continue
        chain = ChainSpec(list(cfg.net.nodes), m_want)
        ckpt = None
        if checkpoint_dir is not None and resume:
            ckpt = _find_checkpoint(checkpoint_dir, fingerprint, m_want, dur)
        if ckpt is not None:
            psi = load_mpso(ckpt)
        else:
            psi = evolve_propagator(chain, dur, cfg.sim)
            if checkpoint_dir is not None:
                checkpoint_dir.mkdir(parents=True, exist_ok=True)
                save_mpso(psi, _checkpoint_path(
                    checkpoint_dir, fingerprint, m_want, dur))
        cache[key] = psi
    segments = [cache[key_low]] + ([cache[key_up]] if m >= 2 else [])
    out = spiral_contract(segments, vec(rho0))
    d = cfg.net.nodes[0].d
    info.discarded_weight = sum(s.discarded_weight for s in segments)
    return _hermitize_normalize(out.reshape(d, d), cfg.sim, info)


def _checkpoint_path(root: Path, fingerprint: str, m: int, s: float) -> Path:
    return root / f"{fingerprint}_m{m}_s{s:.9f}.mpso"


def _find_checkpoint(root: Path, fingerprint: str, m: int, s: float):
    path = _checkpoint_path(root, fingerprint, m, s)
    return path if path.exists() else None


def task_steady(cfg: RunConfig) -> Path:
    cell, spec, rho_ss, t_ss = steady_pipeline(cfg.net, cfg.sim)
    lam = np.abs(spec.eigenvalues[: min(6, len(spec.eigenvalues))])
    header = _metadata_header(cfg, {
        "lambda_drift": f"{spec.drift:.3e}",
        "discarded_weight": f"{cell.discarded_weight:.3e}",
        "cell_asymmetry": f"{cell.asymmetry():.3e}",
    })
    rows = [(
        float(lam[0]), float(lam[1]) if len(lam) > 1 else 0.0, t_ss,
        rho_ss[1, 1].real, rho_ss[0, 1].real, rho_ss[0, 1].imag,
        cell.bond_entropy(),
    )]
    out = cfg.output_dir / "steady.csv"
    _write_csv(out, header, [
        "lambda1_abs", "lambda2_abs", "t_ss", "rho_ee", "re_rho_ge",
        "im_rho_ge", "s_ss",
    ], rows)
    return out


def task_spectrum(cfg: RunConfig) -> Path:
    tau = cfg.net.tau
    t_max = float(cfg.task_options.get("t_max", 10 * tau))
    nu_max = float(cfg.task_options.get("nu_max", 6.0))
    n_nu = int(cfg.task_options.get("n_nu", 601))
    stride = int(cfg.task_options.get("sample_stride", 1))
    nu_grid = np.linspace(-nu_max, nu_max, n_nu)
    s_nu, s_inc, diag = steady_spectrum(cfg.net, cfg.sim, nu_grid, t_max,
                                        sample_stride=stride)
    header = _metadata_header(cfg, {
        "flux": f"{diag['flux']:.6e}", "coherent": f"{diag['coherent']:.6e}",
    })
    rows = list(zip(nu_grid, s_nu, s_inc))
    out = cfg.output_dir / "spectrum.csv"
    _write_csv(out, header, ["nu", "s", "s_inc"], rows)
    return out


def task_g2(cfg: RunConfig) -> Path:
    t_max = float(cfg.task_options.get("t_max", 5 * cfg.net.tau))
    stride = int(cfg.task_options.get("sample_stride", 1))
    step = cfg.sim.dt * stride
    tprimes = np.arange(int(np.floor(t_max / step + 1e-9)) + 1) * step
    g2_vals = steady_g2(cfg.net, cfg.sim, tprimes)
    header = _metadata_header(cfg, {})
    out = cfg.output_dir / "g2.csv"
    _write_csv(out, header, ["tprime", "g2"], list(zip(tprimes, g2_vals)))
    return out


def _entropy_point(args):
    omega, gtau, phi, gamma_l, gamma_r, dt, chi, cutoff, m_sites = args
    from .model import single_node_network

    node = make_two_level_node(omega, 0.0, gamma_l, gamma_r, phi)
    net = single_node_network(node, tau=gtau)
    net, sim = validate_network(net, SimParams(
        dt=dt, chi_max=chi, svd_cutoff=cutoff))
    rows = entropy_scan(
        lambda o, g, p: net, lambda g: sim, [omega], [gtau], [phi],
        m_sites=m_sites,
    )
    return rows[0]


def task_entropy_scan(cfg: RunConfig, workers: int) -> Path:
    omegas = _float_list(cfg.task_options.get("omegas", "0.5"))
    gtaus = _float_list(cfg.task_options.get("gamma_taus", "5.0"))
    phis = _float_list(cfg.task_options.get("phis", str(np.pi)))
    m_sites = int(cfg.task_options.get("m_sites", 20))
    node0 = cfg.net.nodes[0]
    gamma_l = float(np.abs(node0.jump_l[0, 1]) ** 2)
    gamma_r = float(np.abs(node0.jump_r[0, 1]) ** 2)
    grid = [
        (om, gt, ph, gamma_l, gamma_r, cfg.sim.dt, cfg.sim.chi_max,
         cfg.sim.svd_cutoff, m_sites)
        for om in omegas for gt in gtaus for ph in phis
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_entropy_point, grid))
    else:
        rows = [_entropy_point(args) for args in grid]
    header = _metadata_header(cfg, {
        "discarded_weight_max":
            f"{max(r['discarded_weight'] for r in rows):.3e}",
    })
    out = cfg.output_dir / "entropy_scan.csv"
    _write_csv(
        out, header, ["omega", "gamma_tau", "phi", "s_max", "s_ss"],
        [(r["omega"], r["gamma_tau"], r["phi"], r["s_max"], r["s_ss"])
         for r in rows],
    )
    return out


def task_meanfield(cfg: RunConfig) -> Path:
    t_final = float(cfg.task_options.get("t_final", 10 * cfg.net.tau))
    rho0 = _initial_state(cfg)
    times, states = mf_transient(cfg.net, cfg.sim, rho0, t_final)
    rho_mf, iters, residual = mf_steady_state(cfg.net, cfg.sim)
    fidelity = ""
    if cfg.task_options.get("compare_exact", "no") == "yes":
        _, _, rho_exact, _ = steady_pipeline(cfg.net, cfg.sim)
        fidelity = f"{uhlmann_fidelity(rho_exact, rho_mf):.9f}"
    header = _metadata_header(cfg, {
        "mf_steady_rho_ee": f"{rho_mf[1, 1].real:.9f}",
        "mf_iterations": iters,
        "mf_residual": f"{residual:.3e}",
        "mf_fidelity_vs_exact": fidelity or "n/a",
    })
    rows = [(t, s[1, 1].real, s[0, 1].real, s[0, 1].imag)
            for t, s in zip(times, states)]
    out = cfg.output_dir / "meanfield.csv"
    _write_csv(out, header, ["t", "rho_ee", "re_rho_ge", "im_rho_ge"], rows)
    return out


def task_multinode(cfg: RunConfig) -> Path:
    t_final = float(cfg.task_options.get("t_final", 2 * cfg.net.tau))
    times = _readout_times(cfg, t_final)
    rho0 = _initial_state(cfg)
    n = cfg.net.n
    dims = [node.d for node in cfg.net.nodes]
    info = ContractionInfo()
    rows = []
    for t in times:
        joint = multinode_reduced_state(cfg.net, cfg.sim, float(t), rho0,
                                        info=info)
        row = [float(t)]
        for c in range(n):
            marg = partial_trace(joint, dims, c)
            row.extend([marg[1, 1].real, marg[0, 1].real, marg[0, 1].imag])
        rows.append(tuple(row))
    cols = ["t"]
    for c in range(n):
        cols += [f"rho_ee_{c + 1}", f"re_rho_ge_{c + 1}", f"im_rho_ge_{c + 1}"]
    header = _metadata_header(cfg, {
        "discarded_weight_last": f"{info.discarded_weight:.3e}",
        "trace_defect_last": f"{info.trace_defect:.3e}",
    })
    out = cfg.output_dir / "multinode.csv"
    _write_csv(out, header, cols, rows)
    return out


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def run(config_path: str, workers: int = 1, checkpoint_dir: str | None = None,
        resume: bool = False) -> int:
    try:
        cfg = parse_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    ckpt = Path(checkpoint_dir) if checkpoint_dir else None
    try:
        if cfg.task == "evolve":
            out = task_evolve(cfg, ckpt, resume)
        elif cfg.task == "steady":
            out = task_steady(cfg)
        elif cfg.task == "spectrum":
            out = task_spectrum(cfg)
        elif cfg.task == "g2":
            out = task_g2(cfg)
        elif cfg.task == "entropy-scan":
            out = task_entropy_scan(cfg, workers)
        elif cfg.task == "meanfield":
            out = task_meanfield(cfg)
        elif cfg.task == "multinode":
            out = task_multinode(cfg)
        else:  # pragma: no cover - parse_config already rejects
            raise ConfigError(f"unhandled task {cfg.task}")
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 4
    except AccuracyError as exc:
        diag = cfg.output_dir / "diagnostics.txt"
        diag.parent.mkdir(parents=True, exist_ok=True)
        diag.write_text(f"numerical accuracy failure\n{exc}\n")
        print(f"accuracy error: {exc} (diagnostics in {diag})", file=sys.stderr)
        return 3
    print(out)
    return 0


def verify(config_path: str | None = None) -> int:
    ok = run_verification(print_lines=True)
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="feedbacktn",
        description="Tensor-network simulator for time-delayed coherent "
                    "feedback in waveguide QED",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a configured task")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--checkpoint-dir", default=None)
    p_run.add_argument("--resume", action="store_true")
    p_ver = sub.add_parser("verify", help="run the built-in invariant suite")
    p_ver.add_argument("--config", default=None)
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, workers=args.workers,
                   checkpoint_dir=args.checkpoint_dir, resume=args.resume)
    return verify(args.config)


if __name__ == "__main__":
    sys.exit(main())
