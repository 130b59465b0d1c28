//! Plotting scripts written next to rendered tables. They read the CSV files
//! in their own directory and need matplotlib.

macro_rules! script {
    ($body:literal) => {
        concat!(
            r##"import csv
import os
import sys

import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def load(name):
    with open(os.path.join(HERE, name)) as f:
        rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
    return rows


def finish(name):
    out = os.path.join(HERE, name)
    plt.tight_layout()
    plt.savefig(out)
    print(out, file=sys.stderr)
"##,
            $body
        )
    };
}

pub const HYDRO: &str = script!(
    r##"

rows = load("hydro_rows.csv")
for h in sorted({r["test_function"] for r in rows}):
    for n in sorted({int(r["n"]) for r in rows}):
        sel = [r for r in rows if r["test_function"] == h and int(r["n"]) == n]
        t = [float(r["t"]) for r in sel]
        e = [float(r["abs_error"]) for r in sel]
        se = [float(r["abs_error_se"]) for r in sel]
        plt.errorbar(t, e, yerr=se, marker="o", label=f"H{h}, N={n}")
plt.xlabel("t")
plt.ylabel("mean |<pi_t, H> - reference|")
plt.legend()
finish("hydro.png")
"##
);

pub const CAUCHY: &str = script!(
    r##"

rows = load("cauchy.csv")
for t in sorted({r["t"] for r in rows}, key=float):
    sel = [r for r in rows if r["t"] == t]
    plt.loglog([int(r["n"]) for r in sel], [float(r["distance"]) for r in sel], marker="o", label=f"t={float(t):g}")
plt.xlabel("N")
plt.ylabel("d(N, 2N)")
plt.legend()
finish("cauchy.png")
"##
);

pub const TAGGED: &str = script!(
    r##"

rows = load("tagged.csv")
for n in sorted({int(r["n"]) for r in rows}):
    sel = [r for r in rows if int(r["n"]) == n]
    plt.errorbar(
        [float(r["t"]) for r in sel],
        [float(r["exceedance_0"]) for r in sel],
        yerr=[float(r["exceedance_se_0"]) for r in sel],
        marker="o",
        label=f"N={n}",
    )
plt.xlabel("t")
plt.ylabel("P(|x_t/N - u_t| > delta_0)")
plt.legend()
finish("tagged.png")
"##
);

pub const SCALING: &str = script!(
    r##"

rows = load("scaling.csv")
plt.plot([float(r["log_n"]) for r in rows], [float(r["log_median"]) for r in rows], marker="o")
plt.xlabel("log N")
plt.ylabel("log median exit time")
finish("scaling.png")
"##
);

pub const STONE: &str = script!(
    r##"

rows = load("stone.csv")
for r in rows:
    print(f"KS statistic {r['statistic']}, p = {r['p_value']}, passed = {r['passed']}")
"##
);
