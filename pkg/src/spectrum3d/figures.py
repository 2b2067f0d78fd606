"""Report figures: per-figure CSV tables plus matplotlib renderings.

Each emitter aggregates sweep result rows into one figure-ready table,
writes it as ``figN.csv``, and renders the matching ``figN.png`` next to it.
Only figures whose axes the sweep actually covered are produced. Rows may
come straight from the sweep runner or re-read from ``results.csv``.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiment import write_rows_csv

METHOD_ORDER = ("SLPM", "FSPM", "IDW", "HaLRTC")
METHOD_STYLE = {
    "SLPM": dict(color="#c0392b", marker="o"),
    "FSPM": dict(color="#2980b9", marker="s"),
    "IDW": dict(color="#27ae60", marker="^"),
    "HaLRTC": dict(color="#8e44ad", marker="d"),
}


def _normalize(rows):
    """Coerce sweep rows (in-memory or CSV-read) to typed records."""
    out = []
    for r in rows:
        if r.get("status", "ok") != "ok":
            continue
        rec = dict(r)
        rec["rate"] = float(r["rate"])
        rec["k_true"] = int(r["k_true"])
        for field in ("rmse", "cdzr", "fazr", "loc_e", "ss_e",
                      "detect_success"):
            v = r.get(field, "")
            rec[field] = np.nan if v in ("", None) else float(v)
        out.append(rec)
    return out


def _mean_over_seeds(rows, key_fields, value_field):
    groups = {}
    for r in rows:
        if np.isnan(r[value_field]):
            continue
        key = tuple(r[k] for k in key_fields)
        groups.setdefault(key, []).append(r[value_field])
    return {k: (float(np.mean(v)), float(np.std(v))) for k, v in groups.items()}


def _methods(rows):
    present = {r["method"] for r in rows}
    ordered = [m for m in METHOD_ORDER if m in present]
    return ordered + sorted(present - set(METHOD_ORDER))


def _new_axes(xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _emit(fig, table, columns, stem, outdir):
    outdir = Path(outdir)
    csv_path = outdir / f"{stem}.csv"
    png_path = outdir / f"{stem}.png"
    write_rows_csv(table, columns, csv_path)
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def _rate_curves(rows, value_field, ylabel, stem, outdir):
    """Mean-over-seeds curves of one metric vs sampling rate, per method."""
    stats = _mean_over_seeds(rows, ("method", "rate"), value_field)
    if not stats:
        return []
    table = []
    fig, ax = _new_axes("sampling rate", ylabel)
    for method in _methods(rows):
        rates = sorted(r for m, r in stats if m == method)
        if not rates:
            continue
        means = [stats[(method, r)][0] for r in rates]
        stds = [stats[(method, r)][1] for r in rates]
        table += [
            {"rate": r, "method": method, f"{value_field}_mean": m,
             f"{value_field}_std": s}
            for r, m, s in zip(rates, means, stds)
        ]
        ax.errorbar(rates, means, yerr=stds, label=method, capsize=3,
                    **METHOD_STYLE.get(method, {}))
    ax.legend()
    columns = ["rate", "method", f"{value_field}_mean", f"{value_field}_std"]
    return _emit(fig, table, columns, stem, outdir)


def fig4_rmse_vs_rate(rows, outdir):
    """Recovery error against sampling rate, one curve per method."""
    return _rate_curves(_normalize(rows), "rmse", "RSS recovery error",
                        "fig4", outdir)


def fig5_rmse_vs_k(rows, outdir, rate=None):
    """Recovery error against the source count at one sampling rate."""
    rows = _normalize(rows)
    ks = sorted({r["k_true"] for r in rows})
    if len(ks) < 2:
        return []
    if rate is None:
        rate = min({r["rate"] for r in rows}, key=lambda r: abs(r - 0.2))
    rows = [r for r in rows if r["rate"] == rate]
    stats = _mean_over_seeds(rows, ("method", "k_true"), "rmse")
    table = []
    fig, ax = _new_axes("number of sources", "RSS recovery error")
    for method in _methods(rows):
        kk = sorted(k for m, k in stats if m == method)
        if not kk:
            continue
        means = [stats[(method, k)][0] for k in kk]
        stds = [stats[(method, k)][1] for k in kk]
        table += [
            {"k": k, "method": method, "rmse_mean": m, "rmse_std": s,
             "rate": rate}
            for k, m, s in zip(kk, means, stds)
        ]
        ax.errorbar(kk, means, yerr=stds, label=method, capsize=3,
                    **METHOD_STYLE.get(method, {}))
    ax.set_xticks(ks)
    ax.legend()
    return _emit(fig, table, ["k", "method", "rmse_mean", "rmse_std", "rate"],
                 "fig5", outdir)


def fig6_zone_ratios_vs_rate(rows, outdir):
    """Correct-detection and false-alarm zone ratios against sampling rate."""
    rows = _normalize(rows)
    cd = _mean_over_seeds(rows, ("method", "rate"), "cdzr")
    fa = _mean_over_seeds(rows, ("method", "rate"), "fazr")
    if not cd:
        return []
    table = []
    fig, ax = _new_axes("sampling rate", "zone ratio")
    for method in _methods(rows):
        rates = sorted(r for m, r in cd if m == method)
        if not rates:
            continue
        style = METHOD_STYLE.get(method, {})
        ax.plot(rates, [cd[(method, r)][0] for r in rates],
                label=f"{method} CDZR", **style)
        ax.plot(rates, [fa[(method, r)][0] for r in rates], linestyle="--",
                label=f"{method} FAZR", **style)
        table += [
            {"rate": r, "method": method, "cdzr_mean": cd[(method, r)][0],
             "fazr_mean": fa[(method, r)][0]}
            for r in rates
        ]
    ax.legend(fontsize=7, ncol=2)
    return _emit(fig, table, ["rate", "method", "cdzr_mean", "fazr_mean"],
                 "fig6", outdir)


def fig7_loc_error_vs_rate(rows, outdir):
    """Localization error against sampling rate (model-driven methods)."""
    return _rate_curves(_normalize(rows), "loc_e", "localization error (m)",
                        "fig7", outdir)


def fig8_ss_error_vs_rate(rows, outdir):
    """Source signal-strength error against sampling rate."""
    return _rate_curves(_normalize(rows), "ss_e",
                        "signal strength error (dB)", "fig8", outdir)


def fig9_rmse_vs_rate_per_k(rows, outdir, method="SLPM"):
    """Recovery error against sampling rate, one curve per source count."""
    rows = [r for r in _normalize(rows) if r["method"] == method]
    ks = sorted({r["k_true"] for r in rows})
    if len(ks) < 2:
        return []
    stats = _mean_over_seeds(rows, ("k_true", "rate"), "rmse")
    table = []
    fig, ax = _new_axes("sampling rate", f"RSS recovery error ({method})")
    for k in ks:
        rates = sorted(r for kk, r in stats if kk == k)
        ax.plot(rates, [stats[(k, r)][0] for r in rates], marker="o",
                label=f"K={k}")
        table += [
            {"rate": r, "k": k, "method": method,
             "rmse_mean": stats[(k, r)][0], "rmse_std": stats[(k, r)][1]}
            for r in rates
        ]
    ax.legend()
    return _emit(fig, table, ["rate", "k", "method", "rmse_mean", "rmse_std"],
                 "fig9", outdir)


def fig10_detection_rate_vs_rate(rows, outdir):
    """Source-count identification success rate against sampling rate."""
    rows = [r for r in _normalize(rows) if not np.isnan(r["detect_success"])]
    if not rows:
        return []
    # One detection outcome per (scene, rate, seed); methods share it.
    unique = {(r["scene"], r["rate"], r["seed"]): r["detect_success"]
              for r in rows}
    rates = sorted({rate for _, rate, _ in unique})
    table = []
    for rate in rates:
        hits = [v for (_, r, _), v in unique.items() if r == rate]
        table.append({"rate": rate, "success_rate": float(np.mean(hits)),
                      "n_trials": len(hits)})
    fig, ax = _new_axes("sampling rate", "detection success rate")
    ax.plot([t["rate"] for t in table], [t["success_rate"] for t in table],
            marker="o", color="#c0392b")
    ax.set_ylim(-0.05, 1.05)
    return _emit(fig, table, ["rate", "success_rate", "n_trials"], "fig10",
                 outdir)


def emit_figures(rows, outdir) -> list:
    """Write every figure the rows support; returns the created paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    written += fig4_rmse_vs_rate(rows, outdir)
    written += fig5_rmse_vs_k(rows, outdir)
    written += fig6_zone_ratios_vs_rate(rows, outdir)
    written += fig7_loc_error_vs_rate(rows, outdir)
    written += fig8_ss_error_vs_rate(rows, outdir)
    written += fig9_rmse_vs_rate_per_k(rows, outdir)
    written += fig10_detection_rate_vs_rate(rows, outdir)
    return written
