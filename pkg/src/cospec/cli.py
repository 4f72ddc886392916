"""Command-line pipeline: orbits -> signal -> invert -> spectrum.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure (including an orbit table that is complete but carries rejected
candidates), 3 I/O error.  Every artifact embeds the SHA-256 of its
input artifact; --verify re-checks the chain before doing work.
"""

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics as dyn
from . import inversion, orbits, signal, spectrum
from .config import PipelineConfig
from .errors import ConfigError, CospecError, IntegrationError, NyquistError
from .lines import LineSet, SpectralLine, file_sha256

log = logging.getLogger("cospec")


def _load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.load(path)


# ----------------------------------------------------------------- orbits

def cmd_orbits(args) -> int:
    cfg = _load_config(args.config)
    tol = cfg.tolerances
    e = dyn.ScaledEnergy(cfg.scaled_energy)
    table = orbits.search_closed_orbits(
        e, cfg.s_max, cfg.n_seeds, rtol=tol["rtol"], atol=tol["atol"],
        scan_rtol=tol["scan_rtol"])
    out = Path(args.out) if args.out else _outdir(cfg) / "orbits.txt"
    table.save(out)
    prims = table.primitives()
    by_rep = {}
    for o in table.orbits:
        by_rep[o.repetition] = by_rep.get(o.repetition, 0) + 1
    cp, ct = table.census()
    print(f"orbit table: {out}")
    print(f"  rows: {len(table.orbits)} ({len(prims)} primitive); "
          f"census (mirror pairs counted once): {cp} primitive, "
          f"{ct} total")
    print(f"  rows by repetition: "
          + ", ".join(f"{k}: {v}" for k, v in sorted(by_rep.items())))
    print(f"  action range: {min(o.s for o in table.orbits):.6f} .. "
          f"{max(o.s for o in table.orbits):.6f}")
    if table.rejections:
        print(f"  COMPLETE WITH {len(table.rejections)} REJECTED "
              f"candidates (see log)")
        for r in table.rejections:
            log.warning("rejected: %s", r)
        return 2
    print("  COMPLETE")
    return 0


# ----------------------------------------------------------------- signal

def cmd_signal(args) -> int:
    cfg = _load_config(args.config)
    table_path = Path(args.orbits) if args.orbits \
        else _outdir(cfg) / "orbits.txt"
    if not table_path.exists():
        print(f"orbit table not found: {table_path}", file=sys.stderr)
        return 3
    table = orbits.OrbitTable.load(table_path)
    funcs = cfg.build_channels()
    tau = cfg.resolve_tau()
    sigma = cfg.resolve_sigma()
    meta = {
        "scaled_energy": f"{cfg.scaled_energy:.17g}",
        "orbit_table_sha256": file_sha256(table_path),
        "tool_version": __version__,
    }
    for f in funcs:
        if f.label == "swave":
            meta["swave_constant"] = f"{f.coeffs[0]:.17g}"
    sig = signal.build_signal(table.orbits, funcs, sigma, tau,
                              cfg.s_max, meta=meta)
    out = Path(args.out) if args.out else _outdir(cfg) / "signal.txt"
    sig.save(out)
    print(f"signal: {out}")
    print(f"  tau = {tau:.6g}, sigma = {sigma:.6g}, n = {sig.n}, "
          f"L = {sig.n_channels}")
    if args.plot:
        _emit_recurrence_plots(sig, _outdir(cfg))
    return 0


def _emit_recurrence_plots(sig, outdir):
    s = sig.s_grid
    L = sig.n_channels
    cols = ["s"]
    data = [s]
    for a in range(L):
        for b in range(a, L):
            cols += [f"re_C{a + 1}{b + 1}", f"im_C{a + 1}{b + 1}"]
            data += [sig.data[:, a, b].real, sig.data[:, a, b].imag]
            spectrum.svg_curve(
                s / (2.0 * math.pi), sig.data[:, a, b].real,
                outdir / f"recurrence_re_{a + 1}{b + 1}.svg",
                xlabel="s / 2pi", ylabel=f"Re C{a + 1}{b + 1}",
                title=f"recurrence function, channel ({a + 1},{b + 1})")
    arr = np.column_stack(data)
    header = " ".join(cols)
    np.savetxt(outdir / "recurrence.txt", arr, fmt="%.17g",
               header=header)
    print(f"  plots: {outdir}/recurrence_re_*.svg, "
          f"{outdir}/recurrence.txt")


# ----------------------------------------------------------------- invert

def cmd_invert(args) -> int:
    cfg = _load_config(args.config)
    sig_path = Path(args.signal) if args.signal \
        else _outdir(cfg) / "signal.txt"
    if not sig_path.exists():
        print(f"signal file not found: {sig_path}", file=sys.stderr)
        return 3
    sig = signal.SampledSignal.load(sig_path)
    if args.verify:
        if not args.orbits:
            print("--verify needs --orbits to check the chain",
                  file=sys.stderr)
            return 1
        want = sig.meta.get("orbit_table_sha256")
        got = file_sha256(args.orbits)
        if want != got:
            print(f"hash mismatch: signal was built from orbit table "
                  f"{want}, not {got}", file=sys.stderr)
            return 1
        print("hash chain: orbit table -> signal OK")
    sig_hash = file_sha256(sig_path)
    tol = cfg.tolerances
    out_paths = []
    for window in cfg.windows:
        j_basis = cfg.resolve_J(window, sig.n_channels)
        m_full = (sig.n - 2) // 2
        cfg_a = inversion.InversionConfig(
            window=tuple(window), J=j_basis, M=m_full,
            svd_cutoff=tol["svd_cutoff"], accept_im=tol["accept_im"],
            accept_err=tol["accept_err"])
        cfg_b = inversion.InversionConfig(
            window=tuple(window), J=j_basis, M=int(0.75 * m_full),
            svd_cutoff=tol["svd_cutoff"], accept_im=tol["accept_im"],
            accept_err=tol["accept_err"])
        lines_a = inversion.invert(sig, cfg_a)
        lines_b = inversion.invert(sig, cfg_b)
        kept = inversion.cross_validate(
            lines_a, lines_b, tol_w=tol["cross_tol_w"],
            tol_b=tol["cross_tol_b"])
        kept.meta["signal_sha256"] = sig_hash
        kept.meta["tool_version"] = __version__
        out = (_outdir(cfg)
               / f"lines_w{window[0]:g}-{window[1]:g}.txt")
        kept.save(out)
        out_paths.append(out)
        adv = inversion.recommend_signal_length(kept, window)
        adv_txt = f"advisory s_max = {adv:.1f}" if adv else \
            "advisory unavailable"
        print(f"window [{window[0]:g}, {window[1]:g}]: "
              f"{len(lines_a)} -> {len(kept)} lines after "
              f"cross-validation; {adv_txt}; {out}")
    return 0


# --------------------------------------------------------------- spectrum

def cmd_spectrum(args) -> int:
    cfg = _load_config(args.config)
    if args.lines:
        paths = [Path(p) for p in args.lines]
    else:
        paths = sorted(_outdir(cfg).glob("lines_w*.txt"))
    if not paths:
        print("no line-set files given or found", file=sys.stderr)
        return 3
    sig_hash = None
    if args.verify:
        if not args.signal:
            print("--verify needs --signal to check the chain",
                  file=sys.stderr)
            return 1
        sig_hash = file_sha256(args.signal)
    all_lines = []
    for p in paths:
        if not p.exists():
            print(f"line set not found: {p}", file=sys.stderr)
            return 3
        ls = LineSet.load(p)
        if args.verify:
            want = ls.meta.get("signal_sha256")
            if want != sig_hash:
                print(f"hash mismatch: {p} came from signal {want}, "
                      f"not {sig_hash}", file=sys.stderr)
                return 1
        all_lines.extend(ls.lines)
    if args.verify:
        print("hash chain: signal -> line sets OK")
    meta = {"sources": ",".join(file_sha256(p) for p in paths),
            "tool_version": __version__}
    spec = spectrum.assemble_stick_spectrum(
        all_lines, channel=args.channel,
        merge_tol=cfg.tolerances["merge_tol"], meta=meta)
    out = Path(args.out) if args.out else _outdir(cfg) / "spectrum.txt"
    spec.save(out)
    print(f"spectrum: {out} ({len(spec)} sticks, channel "
          f"{args.channel})")
    if args.svg:
        svg = out.with_suffix(".svg")
        spectrum.svg_sticks(spec, svg,
                            title="semiclassical stick spectrum")
        print(f"  plot: {svg}")
    return 0


# --------------------------------------------------------------- pipeline

def cmd_pipeline(args) -> int:
    cfg = _load_config(args.config)
    outdir = _outdir(cfg)
    ns = argparse.Namespace(config=args.config, out=None, plot=True,
                            orbits=None, signal=None, lines=None,
                            verify=False, channel=0, svg=True)
    rc = cmd_orbits(ns)
    if rc not in (0, 2):
        return rc
    had_rejections = rc == 2
    for step in (cmd_signal, cmd_invert, cmd_spectrum):
        rc = step(ns)
        if rc != 0:
            return rc
    if had_rejections:
        log.warning("orbit search completed with rejected candidates")
    print(f"pipeline complete: {outdir}")
    return 0


# --------------------------------------------------------------- selftest

def cmd_selftest(args) -> int:
    """Synthetic-oracle suite: inversion correctness without any
    classical input."""
    rng = np.random.default_rng(args.seed)
    failures = 0

    def check(name, ok, detail):
        nonlocal failures
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not ok:
            failures += 1

    # 50 random lines, 2 channels, plain and smoothed.
    w_true = _spaced_uniform(rng, 16.05, 20.95, 50, 0.02)
    b_true = (rng.uniform(0.1, 2.0, (50, 2))
              * rng.choice([-1.0, 1.0], (50, 2)))
    truth = LineSet(lines=[
        SpectralLine(w=complex(w), b=b.astype(complex))
        for w, b in zip(w_true, b_true)])
    tau = 0.05
    n = int(2.0 * math.pi * 30.0 / tau) + 1
    for sigma, label in ((0.0, "exact comb"), (0.1, "smoothed comb")):
        sig = signal.synthesize_signal(truth, tau, n, sigma=sigma)
        cfg_inv = inversion.InversionConfig(window=(16.0, 21.0), J=60)
        got = inversion.invert(sig, cfg_inv)
        dw, dd = _match_errors(truth, got)
        check(f"{label}: 50 lines recovered",
              len(got) >= 50 and dw < 1e-8 and dd < 1e-6,
              f"{len(got)} lines, max|dw| = {dw:.2e}, "
              f"max rel d-err = {dd:.2e}")

    # Near-degenerate pair, clean signal.
    pair = LineSet(lines=[
        SpectralLine(w=36.969 + 0j, b=np.array([1.0 + 0j, 0.4 + 0j])),
        SpectralLine(w=36.982 + 0j, b=np.array([0.5 + 0j, -0.8 + 0j]))])
    sig = signal.synthesize_signal(pair, tau, n)
    got = inversion.invert(sig, inversion.InversionConfig(
        window=(34.0, 40.0), J=24))
    dw, dd = _match_errors(pair, got)
    check("near-degenerate pair split", len(got) == 2 and dw < 1e-8,
          f"{len(got)} lines, max|dw| = {dw:.2e}")
    return 0 if failures == 0 else 2


def _spaced_uniform(rng, lo, hi, count, min_gap):
    while True:
        w = np.sort(rng.uniform(lo, hi, count))
        if np.min(np.diff(w)) > min_gap:
            return w


def _match_errors(truth, got):
    got_w = np.array([ln.w.real for ln in got.lines])
    max_dw = 0.0
    max_dd = 0.0
    for ln in truth:
        if len(got_w) == 0:
            return math.inf, math.inf
        i = int(np.argmin(np.abs(got_w - ln.w.real)))
        cand = got.lines[i]
        max_dw = max(max_dw, abs(cand.w - ln.w))
        d_true = np.outer(ln.b, ln.b)
        d_got = np.outer(cand.b, cand.b)
        max_dd = max(max_dd, float(np.max(np.abs(d_got - d_true))
                                   / np.max(np.abs(d_true))))
    return max_dw, max_dd


# ------------------------------------------------------------------ main

def _outdir(cfg) -> Path:
    p = Path(cfg.output_dir)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output dir {p}: {exc}") from exc
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cospec",
        description="Semiclassical eigenvalues and transition matrix "
                    "elements from classical closed-orbit data.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0,
                    help="-v: info, -vv: per-orbit and matrix debug")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("orbits", help="search closed orbits")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_orbits)

    p = sub.add_parser("signal", help="build the recurrence signal")
    p.add_argument("--config")
    p.add_argument("--orbits", help="orbit table (default from config)")
    p.add_argument("--out")
    p.add_argument("--plot", action="store_true",
                   help="emit recurrence-function plots")
    p.set_defaults(func=cmd_signal)

    p = sub.add_parser("invert", help="harmonic inversion per window")
    p.add_argument("--config")
    p.add_argument("--signal", help="signal file (default from config)")
    p.add_argument("--orbits", help="orbit table, for --verify")
    p.add_argument("--verify", action="store_true",
                   help="re-check the input hash chain")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("spectrum", help="assemble the stick spectrum")
    p.add_argument("--config")
    p.add_argument("--lines", nargs="*",
                   help="line-set files (default: from output dir)")
    p.add_argument("--signal", help="signal file, for --verify")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("pipeline", help="run all stages")
    p.add_argument("--config")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("selftest", help="synthetic-oracle suite")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO,
             logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NyquistError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IntegrationError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except CospecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
