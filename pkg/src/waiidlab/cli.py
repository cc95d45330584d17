"""Experiment runner: one subcommand per result cluster, reproducible seeds,
self-certifying CSV/JSON output.

Every output row carries the master seed.  After a sweep, the emitted rows
are audited post hoc against their certified-bound columns; the process
exits 1 if any audit fails, 2 on usage errors, 0 otherwise.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .constants import TIE_TOL
from .core import (
    DensityOperator,
    Observable,
    POVM,
    StateN,
    ValidationError,
    load_operator,
)
from .entropies import default_gamma_grid, smooth_zero_renyi, spectral_curve
from .manybody import (
    GGESpec,
    frequency_concentration,
    gge_state,
    joint_concentration,
)
from .protocols import (
    build_compression,
    build_stein_test,
    compression_fidelity,
    dh_epsilon_oracle,
    stein_errors,
)
from .sources import (
    SourceSpec,
    expected_purity_exact,
    generate,
    haar_defect_bound,
    haar_state,
    parse_source,
    philox,
    waiid_defect,
)
from .typicality import (
    build_sigma_q,
    chebyshev_tail,
    empirical_moments,
    projector_logdim,
    projector_weight,
    typical_projector,
)
from .core import partial_trace


def _floats(text: str):
    return [float(x) for x in str(text).split(",")]


def _ints(text: str):
    return [int(x) for x in str(text).split(",")]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return format(x, ".17g")
    return str(x)


def _parse_observable(text: str, d: int) -> Observable:
    if text.startswith("diag="):
        return Observable.diag(_floats(text[5:]))
    if text.startswith("file="):
        return Observable(load_operator(text[5:]))
    raise ValidationError(f"observable must be diag=... or file=..., got {text!r}")


def _parse_density(text: str) -> DensityOperator:
    if text.startswith("diag="):
        return DensityOperator.diag(_floats(text[5:]))
    return DensityOperator(load_operator(text))


def _n_grid(args):
    n_max = args.n_max if args.n_max is not None else args.n_min
    return list(range(args.n_min, n_max + 1, args.n_step))


def _pmap(fn, items, threads):
    """Order-preserving map over pure per-sweep-point work."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# subcommand implementations: each returns (rows, audits)
# audits are (name, ok) pairs evaluated on the emitted rows
# ---------------------------------------------------------------------------


def run_haar(args):
    def one(n):
        out = []
        for k in _ints(args.k):
            vals = np.empty(args.trials)
            for t in range(args.trials):
                st = haar_state(args.d, n, args.seed ^ t)
                marg = partial_trace(st, list(range(1, k + 1)))
                vals[t] = np.real(np.trace(marg.matrix @ marg.matrix))
            se = vals.std(ddof=1) / math.sqrt(args.trials)
            out.append(
                {
                    "d": args.d,
                    "n": n,
                    "k": k,
                    "trials": args.trials,
                    "mean_purity": float(vals.mean()),
                    "expected_purity": expected_purity_exact(args.d, n, k),
                    "std_error": float(se),
                }
            )
        return out

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    audits = [
        (
            f"purity_within_3se(n={r['n']},k={r['k']})",
            abs(r["mean_purity"] - r["expected_purity"]) <= 3 * r["std_error"],
        )
        for r in rows
    ]
    return rows, audits


def run_defect(args):
    spec = parse_source(args.source)

    def one(n):
        out = []
        for k in _ints(args.k):
            if spec.kind == "haar_pure" and args.trials > 1:
                vals = []
                for t in range(args.trials):
                    st = generate(spec, n, trial=t)
                    rep = waiid_defect(spec, n, k, args.mode, args.samples, args.seed, st)
                    vals.append(rep.defect)
                vals = np.asarray(vals)
                defect = float(vals.mean())
                se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
                mode, subsets = rep.mode, rep.subsets_evaluated
            else:
                rep = waiid_defect(spec, n, k, args.mode, args.samples, args.seed)
                defect, se = rep.defect, rep.std_error
                mode, subsets = rep.mode, rep.subsets_evaluated
            bound = (
                haar_defect_bound(spec.d, n, k) if spec.kind == "haar_pure" else None
            )
            out.append(
                {
                    "n": n,
                    "k": k,
                    "mode": mode,
                    "defect": defect,
                    "std_error": se,
                    "subsets_evaluated": subsets,
                    "bound": bound,
                }
            )
        return out

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    audits = []
    for r in rows:
        if r["bound"] is not None:
            audits.append(
                (
                    f"defect_bound(n={r['n']},k={r['k']})",
                    r["defect"] <= r["bound"] + 3 * r["std_error"],
                )
            )
        elif parse_source(args.source).kind == "iid":
            audits.append(
                (f"iid_defect_zero(n={r['n']},k={r['k']})", r["defect"] <= 1e-10)
            )
    return rows, audits


def run_lln(args):
    spec = parse_source(args.source)
    a = _parse_observable(args.observable, spec.d)
    mu = float(np.real(np.trace(spec.reference.matrix @ a.matrix)))

    def one(n):
        st = generate(spec, n)
        out = []
        for delta in _floats(args.delta):
            mean, moment = empirical_moments(st, a, mu)
            tail = chebyshev_tail(st, a, mu, delta)
            out.append(
                {
                    "n": n,
                    "delta": delta,
                    "mu": mu,
                    "mean": mean,
                    "moment": moment,
                    "tail": tail,
                    "cheb_bound": moment / delta**2,
                }
            )
        return out

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    audits = [
        (
            f"chebyshev(n={r['n']},delta={r['delta']})",
            r["tail"] <= r["cheb_bound"] + 1e-12,
        )
        for r in rows
    ]
    return rows, audits


def run_typical(args):
    spec = parse_source(args.source)

    def one(n):
        st = generate(spec, n)
        out = []
        for q in _floats(args.q):
            sq = build_sigma_q(spec.reference, q)
            a_q = Observable(
                sq.basis @ np.diag(sq.levels.astype(complex)) @ sq.basis.conj().T
            )
            for delta in _floats(args.delta):
                proj = typical_projector(sq, delta, n)
                weight = projector_weight(proj, st)
                logdim = projector_logdim(proj)
                _, moment = empirical_moments(st, a_q, sq.h_q)
                tail = chebyshev_tail(st, a_q, sq.h_q, delta)
                out.append(
                    {
                        "n": n,
                        "q": q,
                        "delta": delta,
                        "h_q": sq.h_q,
                        "weight": weight,
                        "logdim_bits": logdim,
                        "rank_bound_bits": n * (sq.h_q + delta),
                        "tail": tail,
                        "moment": moment,
                    }
                )
        return out

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    audits = []
    for r in rows:
        tag = f"(n={r['n']},q={r['q']},delta={r['delta']})"
        audits.append((f"rank_bound{tag}", r["logdim_bits"] <= r["rank_bound_bits"] + TIE_TOL))
        audits.append(
            (f"chebyshev{tag}", r["tail"] <= r["moment"] / r["delta"] ** 2 + 1e-12)
        )
    return rows, audits


def run_compress(args):
    spec = parse_source(args.source)

    def one(n):
        st = generate(spec, n)
        out = []
        for q in _floats(args.q):
            for delta in _floats(args.delta):
                scheme = build_compression(spec.reference, q, delta, n, args.tau)
                exact, lower = compression_fidelity(scheme, st)
                out.append(
                    {
                        "n": n,
                        "q": q,
                        "delta": delta,
                        "h_q": scheme.sq.h_q,
                        "logdim_bits": scheme.compressed_logdim,
                        "rate_bits": scheme.compressed_logdim / n,
                        "Fe_exact": exact,
                        "Fe_lower": lower,
                    }
                )
        return out

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    audits = []
    for r in rows:
        tag = f"(n={r['n']},q={r['q']},delta={r['delta']})"
        audits.append(
            (f"rate_bound{tag}", r["rate_bits"] <= r["h_q"] + r["delta"] + TIE_TOL)
        )
        if r["Fe_exact"] is not None:
            audits.append(
                (f"fe_lower_bound{tag}", r["Fe_exact"] >= r["Fe_lower"] - 1e-10)
            )
    return rows, audits


def run_stein(args):
    rho = _parse_density(args.rho)
    sigma = _parse_density(args.sigma)
    spec = parse_source(args.source) if args.source else SourceSpec("iid", rho)

    def one(n):
        st = generate(spec, n)
        out = []
        for q in _floats(args.q):
            for delta in _floats(args.delta):
                test = build_stein_test(rho, sigma, q, delta, n)
                alpha, beta, bound = stein_errors(test, st, sigma)
                out.append(
                    {
                        "n": n,
                        "q": q,
                        "delta": delta,
                        "a_bits": test.a,
                        "h_q": test.h_q,
                        "alpha": alpha,
                        "beta": beta,
                        "beta_bound": bound,
                        "exponent": test.certificate_exponent,
                    }
                )
        return out

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    audits = [
        (
            f"beta_bound(n={r['n']},q={r['q']},delta={r['delta']})",
            r["beta"] <= r["beta_bound"] + 1e-12,
        )
        for r in rows
    ]
    return rows, audits


def run_dh(args):
    rho = _parse_density(args.rho)
    sigma = _parse_density(args.sigma)
    spec = parse_source(args.source) if args.source else SourceSpec("iid", rho)

    def one(n):
        st = generate(spec, n)
        sig_n = StateN.tensor_power(sigma, n)
        return [
            {"n": n, "epsilon": eps, "dh_bits": dh_epsilon_oracle(st, sig_n, eps)}
            for eps in _floats(args.epsilon)
        ]

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    audits = []
    for n in sorted({r["n"] for r in rows}):
        sub = sorted(
            (r for r in rows if r["n"] == n), key=lambda r: r["epsilon"]
        )
        ok = all(
            sub[i + 1]["dh_bits"] >= sub[i]["dh_bits"] - 1e-10
            for i in range(len(sub) - 1)
        )
        audits.append((f"dh_monotone_in_eps(n={n})", ok))
    return rows, audits


def _manybody_rows(spec, obs, means, args):
    def one(n):
        st = generate(spec, n)
        out = []
        for delta in _floats(args.delta):
            weight = joint_concentration(st, obs, means, delta)
            union = sum(chebyshev_tail(st, a, mu, delta) for a, mu in zip(obs, means))
            out.append(
                {"n": n, "delta": delta, "weight": weight, "union_bound": union}
            )
        return out

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    audits = [
        (
            f"union_bound(n={r['n']},delta={r['delta']})",
            1.0 - r["weight"] <= r["union_bound"] + 1e-10,
        )
        for r in rows
    ]
    return rows, audits


def run_manybody(args):
    spec = parse_source(args.source)
    obs = [_parse_observable(t, spec.d) for t in args.observables.split(";")]
    means = [
        float(np.real(np.trace(spec.reference.matrix @ a.matrix))) for a in obs
    ]
    return _manybody_rows(spec, obs, means, args)


def run_gge(args):
    h = _parse_observable(args.hamiltonian, 0)
    qs = [_parse_observable(t, 0) for t in args.conserved.split(";")] if args.conserved else []
    lams = _floats(args.lambdas)
    gspec = GGESpec(h, tuple(qs), tuple(lams))
    gamma = gge_state(gspec)
    if args.source:
        spec = parse_source(args.source)
    else:
        spec = SourceSpec("iid", gamma)
    obs = gspec.generators
    means = [float(np.real(np.trace(gamma.matrix @ a.matrix))) for a in obs]
    return _manybody_rows(spec, obs, means, args)


def run_measure(args):
    spec = parse_source(args.source)
    povm = POVM.computational_basis(spec.d)

    def one(n):
        out = []
        for delta in _floats(args.delta):
            rep = frequency_concentration(
                spec, povm, n, delta, args.trials, args.seed
            )
            out.append(
                {
                    "n": n,
                    "delta": delta,
                    "trials": rep.trials,
                    "estimate": rep.exceed_probability_estimate,
                    "std_error": rep.std_error,
                }
            )
        return out

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    return rows, []


def run_h0(args):
    spec = parse_source(args.source)

    def one(n):
        st = generate(spec, n)
        return [
            {"n": n, "epsilon": eps, "h0_bits": smooth_zero_renyi(st, eps)}
            for eps in sorted(_floats(args.epsilon))
        ]

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    for r in rows:
        r["h0_rate"] = r["h0_bits"] / r["n"]
    audits = []
    for n in sorted({r["n"] for r in rows}):
        sub = [r["h0_bits"] for r in rows if r["n"] == n]
        ok = all(sub[i + 1] <= sub[i] + 1e-12 for i in range(len(sub) - 1))
        audits.append((f"h0_nonincreasing_in_eps(n={n})", ok))
    return rows, audits


def run_spectral(args):
    spec = parse_source(args.source)
    grid = (
        np.asarray(_floats(args.gamma))
        if args.gamma
        else default_gamma_grid(spec.d)
    )

    def one(n):
        st = generate(spec, n)
        curve = spectral_curve(st, grid)
        return [
            {"n": n, "gamma": float(g), "value": float(v)}
            for g, v in zip(curve.gammas, curve.values)
        ]

    rows = [r for chunk in _pmap(one, _n_grid(args), args.threads) for r in chunk]
    audits = []
    for n in sorted({r["n"] for r in rows}):
        vals = [r["value"] for r in rows if r["n"] == n]
        ok = all(vals[i + 1] >= vals[i] - 1e-12 for i in range(len(vals) - 1))
        audits.append((f"curve_monotone(n={n})", ok))
    return rows, audits


SUBCOMMANDS = {
    "haar": run_haar,
    "defect": run_defect,
    "lln": run_lln,
    "typical": run_typical,
    "compress": run_compress,
    "stein": run_stein,
    "dh": run_dh,
    "manybody": run_manybody,
    "gge": run_gge,
    "measure": run_measure,
    "h0": run_h0,
    "spectral": run_spectral,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waiidlab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, source_required=True):
        p.add_argument("--source", required=source_required, default=None,
                       help='source descriptor, e.g. "haar:d=2:seed=7" or "iid:diag=0.75,0.25"')
        p.add_argument("--n-min", type=int, default=4)
        p.add_argument("--n-max", type=int, default=None)
        p.add_argument("--n-step", type=int, default=1)
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--config", default=None, help="JSON config file; CLI flags win")

    p = sub.add_parser("haar", help="Haar marginal purity vs the closed form")
    common(p, source_required=False)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--k", default="1")
    p.add_argument("--trials", type=int, default=2000)

    p = sub.add_parser("defect", help="weakly almost i.i.d. defect of a source")
    common(p)
    p.add_argument("--k", default="1")
    p.add_argument("--mode", choices=("auto", "exact", "sampled"), default="auto")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--trials", type=int, default=1)

    p = sub.add_parser("lln", help="empirical-average moments and Chebyshev tail")
    common(p)
    p.add_argument("--observable", required=True, help="diag=... or file=...")
    p.add_argument("--delta", default="0.1")

    p = sub.add_parser("typical", help="universal typical projector diagnostics")
    common(p)
    p.add_argument("--q", default="0.1")
    p.add_argument("--delta", default="0.1")

    p = sub.add_parser("compress", help="universal compression sweep")
    common(p)
    p.add_argument("--q", default="0.1")
    p.add_argument("--delta", default="0.1")
    p.add_argument("--tau", choices=("first_basis_vector_of_range", "maximally_mixed_on_range"),
                   default="first_basis_vector_of_range")

    p = sub.add_parser("stein", help="universal Stein test sweep")
    common(p, source_required=False)
    p.add_argument("--rho", required=True, help="diag=... or a state file")
    p.add_argument("--sigma", required=True)
    p.add_argument("--q", default="0.1")
    p.add_argument("--delta", default="0.05")

    p = sub.add_parser("dh", help="hypothesis-testing relative entropy oracle")
    common(p, source_required=False)
    p.add_argument("--rho", required=True)
    p.add_argument("--sigma", required=True)
    p.add_argument("--epsilon", default="0.1")

    p = sub.add_parser("manybody", help="joint concentration of commuting observables")
    common(p)
    p.add_argument("--observables", required=True, help='semicolon list, e.g. "diag=1,-1;diag=1,0"')
    p.add_argument("--delta", default="0.2")

    p = sub.add_parser("gge", help="generalized Gibbs typicality")
    common(p, source_required=False)
    p.add_argument("--hamiltonian", required=True, help="diag=... or file=...")
    p.add_argument("--conserved", default="", help="semicolon list of observables")
    p.add_argument("--lambdas", required=True, help="lambda_0, then one per conserved")
    p.add_argument("--delta", default="0.2")

    p = sub.add_parser("measure", help="measurement-frequency concentration")
    common(p)
    p.add_argument("--delta", default="0.1")
    p.add_argument("--trials", type=int, default=500)

    p = sub.add_parser("h0", help="smooth zero-order entropy sweep")
    common(p)
    p.add_argument("--epsilon", default="0.1")

    p = sub.add_parser("spectral", help="spectral entropy-rate curve")
    common(p)
    p.add_argument("--gamma", default=None, help="comma list; default grid over [0, log2 d]")

    return parser


def _apply_config(argv):
    """Merge a --config JSON file into argv as defaults (CLI flags win)."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    with open(path) as fh:
        cfg = json.load(fh)
    merged = list(argv)
    for key, val in cfg.items():
        if key == "subcommand":
            continue
        flag = "--" + key.replace("_", "-")
        if flag not in argv:
            merged.extend([flag, str(val)])
    return merged


def write_output(rows, audits, args):
    columns = list(rows[0].keys()) + ["seed"] if rows else ["seed"]
    for r in rows:
        r["seed"] = args.seed
    lines = []
    if args.format == "csv":
        lines.append(",".join(columns))
        for r in rows:
            lines.append(",".join(_fmt(r[c]) for c in columns))
        for name, ok in audits:
            lines.append(f"# audit {name}: {'PASS' if ok else 'FAIL'}")
        text = "\n".join(lines) + "\n"
    else:

        def coerce(x):
            if isinstance(x, (bool, type(None), str)):
                return x
            if isinstance(x, (int, np.integer)):
                return int(x)
            if isinstance(x, (float, np.floating)):
                return float(x)
            return x

        payload = {
            "rows": [{c: coerce(r[c]) for c in columns} for r in rows],
            "audits": [{"name": n, "pass": bool(ok)} for n, ok in audits],
        }
        text = json.dumps(payload, indent=1) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(argv)
        args = parser.parse_args(argv)
        rows, audits = SUBCOMMANDS[args.subcommand](args)
        write_output(rows, audits, args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    failed = [name for name, ok in audits if not ok]
    if failed:
        print(f"{len(failed)} audit(s) failed: {failed[:5]}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
