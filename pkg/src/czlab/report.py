"""CSV tables and dependency-free SVG plots for ensemble runs.

Files are byte-deterministic functions of (records, config): floats are
formatted with a fixed %.12g, rows are ordered by seed / threshold, and
every file carries the config hash plus the calibration constants in a
leading comment line.
"""

import math
import os

import numpy as np

from czlab.errors import ValidationError
from czlab.harness import config_hash, fit_tail_exponent, pool_tails

FLOAT_FMT = "%.12g"


def _fmt(v):
    if isinstance(v, float):
        return FLOAT_FMT % v
    return str(v)


def _header_line(config):
    return (
        "# config %s C_lip=%s C_Y=%s C_gate=%s C_0=%s c_0=%s C_climb=%s c_level=%s C_meas=%s"
        % (
            config_hash(config),
            _fmt(config.C_lip), _fmt(config.C_Y), _fmt(config.C_gate),
            _fmt(config.C_0), _fmt(config.c_0), _fmt(config.C_climb),
            _fmt(config.c_level), _fmt(config.C_meas),
        )
    )


def _write_csv(path, config, columns, rows):
    lines = [_header_line(config), ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_report(records, config, out_dir=None):
    """Write trials/tails/goodlambda/moments CSVs and the three SVG plots.

    Returns a dict {name: path}.  Raises on empty input; failed trials are
    listed in trials.csv but excluded from pooled statistics.
    """
    if not records:
        raise ValidationError("emit_report needs at least one record")
    out = out_dir or config.output_dir
    os.makedirs(out, exist_ok=True)
    records = sorted(records, key=lambda r: r.seed)
    exps = config.exponents()
    paths = {}

    cols = ["seed", "status", "iterations", "residual", "t_star", "M",
            "Y_R", "Z_R", "censored_fraction", "w1p_lhs", "w1p_rhs",
            "w1p_ratio", "w1p_lhs_maximal", "error"]
    rows = [
        [r.seed, r.status, r.solve_iterations, r.solve_residual, r.t_star, r.M,
         r.Y_R, r.Z_R, r.censored_fraction, r.w1p_lhs, r.w1p_rhs,
         r.w1p_ratio, r.w1p_lhs_maximal, r.error.replace(",", ";")]
        for r in records
    ]
    paths["trials"] = os.path.join(out, "trials.csv")
    _write_csv(paths["trials"], config, cols, rows)

    ok = [r for r in records if r.status == "ok"]
    table = None
    if ok:
        table = pool_tails(records, exps)
        try:
            fit_tail_exponent(table)
        except Exception:
            pass  # fit failure leaves NaN slope; tails.csv still written
        rows = [
            [table.thresholds[j], table.pooled_fractions[j], table.n_trials]
            for j in range(len(table.thresholds))
        ]
        paths["tails"] = os.path.join(out, "tails.csv")
        _write_csv(paths["tails"], config, ["T_over_tstar", "pooled_fraction", "n_trials"], rows)

        cols = ["seed", "t_over_tstar", "status", "lhs", "rhs_decay", "rhs_f",
                "rhs_k", "c_meas", "n_balls", "n_good", "n_bad_f", "n_bad_k",
                "n_decay_violations"]
        rows = []
        for r in ok:
            for row in r.goodlambda_rows:
                if row["status"] == "ok":
                    rows.append([r.seed, row["t_over_tstar"], "ok", row["lhs"],
                                 row["rhs_decay"], row["rhs_f"], row["rhs_k"],
                                 row["c_meas"], row["n_balls"], row["n_good"],
                                 row["n_bad_f"], row["n_bad_k"],
                                 row["n_decay_violations"]])
                else:
                    rows.append([r.seed, row["t_over_tstar"], "aborted",
                                 "nan", "nan", "nan", "nan", "nan", 0, 0, 0, 0, 0])
        paths["goodlambda"] = os.path.join(out, "goodlambda.csv")
        _write_csv(paths["goodlambda"], config, cols, rows)

        rows = [[r.seed, r.Z_R, r.Y_R, r.censored_fraction] for r in ok]
        paths["moments"] = os.path.join(out, "moments.csv")
        _write_csv(paths["moments"], config, ["seed", "Z_R", "Y_R", "censored_fraction"], rows)

        paths["tail_plot"] = os.path.join(out, "tails.svg")
        _tail_svg(paths["tail_plot"], config, table)
        paths["k_hist"] = os.path.join(out, "k_histogram.svg")
        _hist_svg(paths["k_hist"], config, np.concatenate([r.k_values for r in ok]) if ok else [])
        paths["moment_plot"] = os.path.join(out, "moments.svg")
        s = float(exps.s_integrability)
        running = _running_exp_moment([r.Y_R for r in ok], s)
        _curve_svg(paths["moment_plot"], config, running,
                   "trials", "running mean exp(Y_R^s)")
    return paths


def _running_exp_moment(y_values, s):
    vals = np.exp(np.asarray(y_values, dtype=float) ** s)
    return np.cumsum(vals) / np.arange(1, len(vals) + 1)


# ---------------------------------------------------------------------------
# minimal SVG output (deterministic text, no plotting dependency)

_W, _H, _PAD = 640, 440, 60


def _svg_open(title, config):
    return [
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">' % (_W, _H),
        "<!-- %s -->" % _header_line(config)[2:],
        '<rect width="%d" height="%d" fill="white"/>' % (_W, _H),
        '<text x="%d" y="24" font-size="15">%s</text>' % (_PAD, title),
    ]


def _scale(vals, lo, hi, out_lo, out_hi):
    if hi <= lo:
        hi = lo + 1.0
    return [(out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)) for v in vals]


def _axis_box(parts):
    parts.append(
        '<rect x="%d" y="40" width="%d" height="%d" fill="none" stroke="black"/>'
        % (_PAD, _W - 2 * _PAD, _H - 40 - _PAD)
    )


def _tail_svg(path, config, table):
    parts = _svg_open("pooled tail of the maximal field (log-log)", config)
    _axis_box(parts)
    ts = [t for t, f in zip(table.thresholds, table.pooled_fractions) if f > 0]
    fr = [f for f in table.pooled_fractions if f > 0]
    if ts:
        lx = [math.log10(t) for t in ts]
        ly = [math.log10(f) for f in fr]
        xlo, xhi = min(lx), max(lx)
        ylo, yhi = min(ly), max(ly)
        X = _scale(lx, xlo, xhi, _PAD + 10, _W - _PAD - 10)
        Y = _scale(ly, ylo, yhi, _H - _PAD - 10, 50)
        for x, y in zip(X, Y):
            parts.append('<circle cx="%.1f" cy="%.1f" r="3" fill="black"/>' % (x, y))
        # predicted slope reference line through the first plotted point
        sl = table.predicted_slope
        y2 = ly[0] + sl * (xhi - xlo) / (1 if xhi > xlo else 1)
        Xr = _scale([xlo, xhi], xlo, xhi, _PAD + 10, _W - _PAD - 10)
        Yr = _scale([ly[0], y2], ylo, yhi, _H - _PAD - 10, 50)
        parts.append(
            '<line x1="%.1f" y1="%.1f" x2="%.1f" y2="%.1f" stroke="gray" stroke-dasharray="4"/>'
            % (Xr[0], Yr[0], Xr[1], Yr[1])
        )
        parts.append(
            '<text x="%d" y="%d" font-size="12">predicted slope %s, fitted %s (stderr %s)</text>'
            % (_PAD, _H - 20, FLOAT_FMT % table.predicted_slope,
               FLOAT_FMT % table.fitted_slope, FLOAT_FMT % table.fitted_stderr)
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def _hist_svg(path, config, values, bins=20):
    parts = _svg_open("K histogram (probed cells, pooled)", config)
    _axis_box(parts)
    values = np.asarray(values, dtype=float)
    if values.size:
        counts, edges = np.histogram(values, bins=bins)
        top = max(1, counts.max())
        width = (_W - 2 * _PAD) / bins
        for i, c in enumerate(counts):
            h = (_H - 40 - _PAD) * c / top
            parts.append(
                '<rect x="%.1f" y="%.1f" width="%.1f" height="%.1f" fill="steelblue"/>'
                % (_PAD + i * width, _H - _PAD - h, width - 1, h)
            )
        parts.append(
            '<text x="%d" y="%d" font-size="12">K in [%s, %s], %d cells</text>'
            % (_PAD, _H - 20, FLOAT_FMT % edges[0], FLOAT_FMT % edges[-1], values.size)
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def _curve_svg(path, config, values, xlabel, ylabel):
    parts = _svg_open(ylabel, config)
    _axis_box(parts)
    values = list(float(v) for v in values)
    if values:
        lo, hi = min(values), max(values)
        X = _scale(list(range(len(values))), 0, max(1, len(values) - 1),
                   _PAD + 10, _W - _PAD - 10)
        Y = _scale(values, lo, hi, _H - _PAD - 10, 50)
        pts = " ".join("%.1f,%.1f" % (x, y) for x, y in zip(X, Y))
        parts.append('<polyline points="%s" fill="none" stroke="black"/>' % pts)
        parts.append(
            '<text x="%d" y="%d" font-size="12">%s; final %s</text>'
            % (_PAD, _H - 20, xlabel, FLOAT_FMT % values[-1])
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
