"""Command-line entry point.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
Every run writes ``manifest.json`` next to its outputs.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import echo as E
from ._accel import set_threads
from .config import Config, ConfigError, frequency_axis, hz
from .distributions import QuadratureError, ensemble_density
from .dynamics import IntegrationError, integrate
from .io import OutputError, RunManifest, emit_csv, emit_json, read_csv
from .linear import ComplexSpectrum, K_of_omega, deembed_K, reflection_coeff, susceptibility, synthesize_S11
from .params import ValidationError
from .spectrum import LABELS, spectrum_table
from .units import TWO_PI, UnitError

SUBCOMMANDS = ("spectrum", "density", "coupling", "reflect", "deembed", "simulate", "echo2pe", "sweep")


def _spectrum(cfg, out, args):
    s = "spectrum"
    B = np.linspace(cfg.quantity(s, "B_min", "field"), cfg.quantity(s, "B_max", "field"), cfg.integer(s, "n_B"))
    family = cfg.raw(s, "family", "non_orth")
    E = cfg.quantity(s, "E", "angular", "0")
    nv = cfg.nv()
    exact = spectrum_table(B, nv, family, E=E, exact=True)
    approx = spectrum_table(B, nv, family, E=E, exact=False)
    names = [f"mI{lab.m_I:+d}_{lab.branch}" for lab in LABELS]
    table = {"B_NV_mT": B * 1e3}
    for k, n in enumerate(names):
        table[f"{n}_MHz"] = hz(exact[:, k]) * 1e-6
    for k, n in enumerate(names):
        table[f"{n}_approx_MHz"] = hz(approx[:, k]) * 1e-6
    path = os.path.join(out, "spectrum.csv")
    emit_csv(table, path)
    return [path]


def _density(cfg, out, args):
    spec, nv = cfg.distribution_spec(), cfg.nv()
    rho = ensemble_density(cfg.B_NV(), spec, nv)
    path = os.path.join(out, "density.csv")
    emit_csv({"omega_MHz": hz(rho.omega) * 1e-6, "rho_per_MHz": rho.density * TWO_PI * 1e6}, path,
             meta={"B_NV_T": rho.B_NV, "captured": rho.captured})
    paths = [path]
    if args.b_sweep:
        lo, hi, n = args.b_sweep
        cols = {"B_NV_mT": [], "omega_MHz": [], "rho_per_MHz": []}
        for B in np.linspace(lo, hi, int(n)):
            r = ensemble_density(B * 1e-3, spec, nv)
            cols["B_NV_mT"].append(np.full(r.omega.size, B))
            cols["omega_MHz"].append(hz(r.omega) * 1e-6)
            cols["rho_per_MHz"].append(r.density * TWO_PI * 1e6)
        map_path = os.path.join(out, "density_map.csv")
        emit_csv({k: np.concatenate(v) for k, v in cols.items()}, map_path)
        paths.append(map_path)
    return paths


def _coupling(cfg, out, args):
    raw = cfg.coupling_density(measured=False)
    cd = cfg.coupling_density()
    csv_path = os.path.join(out, "coupling.csv")
    fams = sorted(cd.family_weight)
    emit_csv({"g_over_2pi_MHz": np.tile(hz(cd.g) * 1e-6, len(fams)),
              "g2rho_weight": np.concatenate([cd.family_weight[f] / cd.g_ens2 for f in fams]),
              "family": np.repeat(fams, cd.g.size)}, csv_path)
    json_path = os.path.join(out, "coupling.json")
    emit_json({"g_ens_first_principles_Hz": raw.g_ens / TWO_PI, "g_ens_Hz": cd.g_ens / TWO_PI,
               "orth_share": cd.orth_share, "dropped_fraction": raw.dropped_weight / (raw.g_ens2 + raw.dropped_weight),
               "spins": float(np.sum(cd.N))}, json_path)
    return [csv_path, json_path]


def _reflect(cfg, out, args):
    grid = cfg.grid()
    cavity = cfg.cavity()
    omega = frequency_axis(cfg, "reflect")
    K = K_of_omega(grid, 1.0 / cfg.quantity("reflect", "T2", "time"), omega)
    r = reflection_coeff(omega, cavity, K)
    chi = susceptibility(K, cavity.eta, cavity.omega_c)
    S11 = synthesize_S11(K, cavity)
    S11_sat = synthesize_S11(K_of_omega(None, 0.0, omega), cavity)
    names = (("r", r), ("K", K), ("chi", chi), ("S11", S11), ("S11_sat", S11_sat))
    return [write_trace(spec, os.path.join(out, f"{n}.csv"), cavity) for n, spec in names]


def write_trace(spec, path, cavity):
    """Complex spectrum as ``omega_MHz, re, im`` with its convention in the header."""
    emit_csv({"omega_MHz": hz(spec.omega) * 1e-6, "re": spec.values.real, "im": spec.values.imag}, path,
             meta={"kind": spec.kind, "convention": spec.convention, "kappa_rad_s": cavity.kappa,
                   "omega_c_rad_s": cavity.omega_c})
    return path


def read_trace(path, kind="S11", convention=None):
    """Inverse of :func:`write_trace`; ``convention`` overrides the header."""
    try:
        t, meta = read_csv(path)
        conv = convention or meta.get("convention", "engineering")
        return ComplexSpectrum(TWO_PI * 1e6 * t["omega_MHz"], t["re"] + 1j * t["im"], kind, conv)
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"{path}: cannot read trace ({exc})") from None


def _deembed(cfg, out, args):
    if not args.s11 or not args.s11_sat:
        raise ConfigError("deembed needs --s11 and --s11-sat")
    S = read_trace(args.s11, convention=args.convention)
    Ss = read_trace(args.s11_sat, convention=args.convention)
    cavity = cfg.cavity()
    K, bad = deembed_K(S, Ss, cavity)
    if np.any(bad):
        raise FloatingPointError(f"{int(np.sum(bad))} points have a vanishing denominator")
    chi = susceptibility(K, cavity.eta, cavity.omega_c)
    return [write_trace(K, os.path.join(out, "K.csv"), cavity),
            write_trace(chi, os.path.join(out, "chi.csv"), cavity)]


def _simulate(cfg, out, args):
    grid = cfg.grid()
    sim = cfg.simulation(grid)
    seq = cfg.sequence(grid)
    t_end = sim.t_end(seq)
    snaps = [float(u) * 1e-6 for u in args.snapshots]
    if snaps:
        trace = integrate(seq.waveform, grid, sim.cavity, sim.dec, sim.dt, t_end, p_prime=sim.p_prime,
                          snapshot_times=snaps, backend=sim.backend)
    else:
        trace, _ = sim.run(seq, t_end)
    path = os.path.join(out, "trace.csv")
    a = E.demodulated(trace, seq.detuning)
    emit_csv({"t_us": trace.t * 1e6, "Xc": trace.X, "Pc": trace.P, "aR_I": a.real, "aR_Q": a.imag}, path)
    paths = [path]
    if trace.snapshots:
        rows = {"t_us": [], "bin": [], "Sx": [], "Sy": [], "Sz": []}
        for t, st in sorted(trace.snapshots.items()):
            rows["t_us"].append(np.full(grid.size, t * 1e6))
            rows["bin"].append(np.arange(grid.size))
            rows["Sx"].append(st.Sx)
            rows["Sy"].append(st.Sy)
            rows["Sz"].append(st.Sz)
        snap_path = os.path.join(out, "snapshots.csv")
        emit_csv({k: np.concatenate(v) for k, v in rows.items()}, snap_path)
        paths.append(snap_path)
    return paths


def _echo_outputs(out, trace, seq, report, data):
    json_path = os.path.join(out, "echo_report.json")
    emit_json(data, json_path)
    a = np.abs(E.demodulated(trace, seq.detuning))
    mark = np.zeros(trace.t.size)
    for e in report.echoes:
        mark[np.abs(trace.t - e.expected_time) <= report.window] = 1.0
    trace_path = os.path.join(out, "echo_trace.csv")
    emit_csv({"t_us": trace.t * 1e6, "abs_aR": a, "echo_window": mark}, trace_path)
    eff_path = os.path.join(out, "efficiency.csv")
    emit_csv({"two_tau_us": [(e.expected_time - e.t_input) * 1e6 for e in report.echoes],
              "efficiency": report.efficiencies}, eff_path)
    return [json_path, trace_path, eff_path]


def _echo2pe(cfg, out, args):
    grid = cfg.grid()
    sim = cfg.simulation(grid)
    seq = cfg.sequence(grid)
    opts = cfg.echo_options()
    t_end = sim.t_end(seq, opts["window"])
    trace, diag = sim.run(seq, t_end)
    ref = sim.run(seq.scaled(0.0), t_end)[0] if opts["subtract_reference"] else None
    report = E.detect_echoes(trace, seq, opts["window"], reference=ref, phase_window=opts["phase_window"])
    data = report.to_dict()
    data["bi_T2_diagnostic"] = None if np.isnan(diag) else diag
    if sim.dec.biexp is not None:
        c, ratios = E.efficiency_prefactor([report], E.biexp_envelope(sim.dec.biexp))
        data["prefactor"] = c
        data["prefactor_ratios"] = ratios
    return _echo_outputs(out, trace, seq, report, data)


def _sweep(cfg, out, args):
    grid = cfg.grid()
    sim = cfg.simulation(grid)
    seq = cfg.sequence(grid)
    opts = cfg.echo_options()
    kind = cfg.raw("sweep", "kind", "power")
    path = os.path.join(out, "sweep.csv")
    if kind == "power":
        res = E.sweep_refocus_power(sim, seq, cfg.floats("sweep", "powers"), **opts)
        emit_csv({"power_dBm": res.powers_dBm, "echo_area": res.areas, "echo_energy": res.energies}, path)
        emit_json({"onset_dBm": E.onset_power(res.powers_dBm, res.areas), "powers_dBm": res.powers_dBm,
                   "areas": res.areas}, os.path.join(out, "sweep.json"))
    elif kind == "tau":
        f = E.biexp_envelope(sim.dec.biexp) if sim.dec.biexp is not None else None
        res = E.sweep_tau(sim, seq, cfg.floats("sweep", "taus", 1e-6), f=f, **opts)
        rows = [(t, e) for t, r in zip(res.taus, res.reports) for e in r.echoes]
        emit_csv({"tau_us": [t * 1e6 for t, _ in rows], "two_tau_us": [(e.expected_time - e.t_input) * 1e6
                                                                     for _, e in rows],
                  "efficiency": [e.efficiency for _, e in rows]}, path)
        emit_json({"prefactor": res.prefactor, "ratios": res.ratios}, os.path.join(out, "sweep.json"))
    else:
        raise ValidationError("sweep.kind", f"unknown sweep kind {kind!r}")
    return [path, os.path.join(out, "sweep.json")]


HANDLERS = {"spectrum": _spectrum, "density": _density, "coupling": _coupling, "reflect": _reflect,
            "deembed": _deembed, "simulate": _simulate, "echo2pe": _echo2pe, "sweep": _sweep}


def build_parser():
    p = argparse.ArgumentParser(prog="nvecho", description="NV spin-ensemble echo memory simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("-c", "--config", default="preset:default",
                       help="INI file or preset:<name> (default: preset:default)")
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config entry (repeatable)")
        s.add_argument("-o", "--out", default=None, help="output directory (default: ./nvecho-out/<command>)")
        s.add_argument("--threads", type=int, default=None, help="worker threads (default: NVECHO_THREADS or all)")
        if name == "deembed":
            s.add_argument("--s11", help="trace CSV (omega_MHz, re, im) with the spins polarized")
            s.add_argument("--s11-sat", help="trace CSV (omega_MHz, re, im) with the spins saturated")
            s.add_argument("--convention", choices=("engineering", "physics"), default=None,
                           help="sign convention of both traces (default: read from the file header)")
        if name == "density":
            s.add_argument("--b-sweep", nargs=3, type=float, metavar=("MIN_mT", "MAX_mT", "N"),
                           help="also write the density map over a range of applied fields")
        if name == "simulate":
            s.add_argument("--snapshots", nargs="*", default=[], metavar="T_US",
                           help="times (us) at which per-bin spin states are written")
    return p


def run(command, config, overrides=(), out=None, threads=None, args=None):
    """Run one subcommand; returns the exit status."""
    t0 = time.perf_counter()
    try:
        cfg = Config(config, overrides)
        out = os.path.join("nvecho-out", command) if out is None else out
        os.makedirs(out, exist_ok=True)
        n = set_threads(threads)
        paths = HANDLERS[command](cfg, out, args)
        integ = {}
        if cfg.parser.has_section("integrator"):
            integ = dict(cfg.parser["integrator"])
        manifest = RunManifest(command, cfg.path, cfg.hash(), cfg.overrides, [os.path.basename(q) for q in paths],
                               integ, time.perf_counter() - t0, threads=n)
        manifest.write(out)
    except (ConfigError, ValidationError, UnitError, OutputError, OSError) as exc:
        print(f"nvecho: error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, QuadratureError, E.FitError, FloatingPointError) as exc:
        print(f"nvecho: numerical failure: {exc}", file=sys.stderr)
        return 1
    print(f"nvecho {command}: wrote {', '.join(paths)}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.set, args.out, args.threads, args)


if __name__ == "__main__":
    sys.exit(main())
