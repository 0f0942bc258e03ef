"""``opfactor`` command line.

Exit codes: 0 success, 1 a certificate failed, 2 infeasible,
3 parse or configuration error, 4 obstruction, 5 verification mismatch.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path


from . import families, nil, qn
from .blockop import weighted_shift_matrix
from .bundle import BundleError, BundleWriter, VerifyMismatch, verify_bundle
from .decompose import canonical_form, joint_canonical_form
from .errors import (
    Infeasible, NotEssentiallySingular, RangeInclusionFailed, SemiFredholmObstruction,
    ShapeMismatch, SplitTooShallow,
)
from .linalg import pad_with_zero
from .mmio import read_matrix, write_matrix

log = logging.getLogger("opfactor")

EXIT_OK, EXIT_CERT, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_OBSTRUCTION, EXIT_MISMATCH = 0, 1, 2, 3, 4, 5


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# inputs


def _load_family(text):
    p = Path(text)
    raw = p.read_text() if p.exists() else text
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"family descriptor is not JSON: {exc}") from exc
    return families.FamilyDescriptor.from_json(doc)


def _load_inputs(args):
    if getattr(args, "family", None):
        desc = _load_family(args.family)
        return families.generate(desc), desc
    files = [args.inputs] if isinstance(args.inputs, str) else args.inputs
    if not files:
        raise ConfigError("no input matrices given")
    mats = [read_matrix(Path(f)) for f in files]
    return mats, None


def _square_family(mats):
    n = mats[0].shape
    for M in mats:
        if M.shape != n or M.shape[0] != M.shape[1]:
            raise ConfigError("inputs must be square matrices of one size")


# ---------------------------------------------------------------------------
# factor-nilpotent


def _nil_certificates(w, fac, tol):
    w.record("padding", fac.decomposition.plan.to_json())
    w.record("nilpotency_indices", fac.nilpotency_indices)
    for name, X in fac.factors.items():
        mats = X if isinstance(X, list) else [X]
        for i, M in enumerate(mats):
            key = name if not isinstance(X, list) else f"{name}{i}"
            w.add(key, M)
            if name == "S_i":
                # S_i itself is not nilpotent; its products with N1, N2 are
                continue
            w.check("cube_norm", f"cube_{key}", tol["cube"], matrix=key)
            w.check("nil_index", f"index_{key}", 3, matrix=key)
    return w


def cmd_factor_nilpotent(args):
    mats, desc = _load_inputs(args)
    _square_family(mats)
    T = mats[0]
    budget = 0 if args.no_pad else args.budget
    tol = {"kernel": args.tol, "residual": 1e-10, "cube": 1e-12}
    w = BundleWriter("factor-nilpotent", {"budget": budget, "family": desc and desc.to_json()}, tol)
    fac = nil.factor_two_nilpotents(T, tol=args.tol, budget=budget)
    w.add("T", T, is_input=True)
    w.add("T_pad", fac.decomposition.padded(T))
    _nil_certificates(w, fac, tol)
    w.check("residual", "residual_MN", tol["residual"], lhs=["M", "N"], rhs=["T_pad"],
            norm="fro", scale="fro")
    return w


# ---------------------------------------------------------------------------
# factor-qn


def qn_bundle(w, f, tol):
    """Add payloads and certificates for a quasi-nilpotent factorization to ``w``."""
    rf = f.refined
    W = f.window
    from .blockop import truncate
    outer = W + 1
    b = rf.block_dim
    w.add("Q1_window", truncate(f.Q1, outer))
    w.add("Q2_window", truncate(f.Q2, outer))
    w.add("T_window", truncate(f.T, W))
    w.check("residual", "residual_Q1Q2", tol["residual"], lhs=["Q1_window", "Q2_window"],
            rhs=["T_window"], crop=[b, (2 * W + 1) * b], norm="block", block=b,
            scale="one_plus_block")
    for label, cert in (("Q1", f.cert_Q1), ("Q2", f.cert_Q2)):
        for k, (M, rows) in enumerate(cert.corners):
            key = f"{label}_corner{k + 1}"
            w.add(key, M)
            w.check("power_norms", f"gelfand_{key}", cert.threshold, matrix=key,
                    rows=[int(r) for r in rows], n_max=cert.details["n_max"])
    for label, blocks in (("R1", rf.L), ("R2", [K.conj().T for K in rf.K])):
        R, d = weighted_shift_matrix(blocks, f.scale)
        w.add(label, R)
        w.check("bound_check", f"bound_{label}", None, matrix=label, block=d, scale=f.scale,
                n_max=tol["bound_n_max"], rtol=1e-9)
    w.record("refined", {"pieces": rf.pieces, "block_dim": b,
                         "domain_bounds": rf.splits[0].bounds if rf.splits else None,
                         "range_bounds": rf.splits[1].bounds if rf.splits else None})
    return w


def cmd_factor_qn(args):
    mats, desc = _load_inputs(args)
    _square_family(mats)
    tol = {"residual": 1e-10, "gelfand": args.threshold, "bound_n_max": 10,
           "corner": 1e-12}
    params = {"base": args.base, "pieces": args.pieces, "k": args.k,
              "family": desc and desc.to_json()}
    w = BundleWriter("factor-qn", params, tol)
    if desc is not None and desc.kind == "canonical-form-synthetic":
        jcf, _ = families.canonical_synthetic(desc)
        cf = jcf.forms[0]
    else:
        cf = canonical_form(mats[0], k=args.k)
    w.add("T", mats[0], is_input=True)
    window = args.window
    f = qn.factor_quasinilpotent(cf, window=window, base=args.base, pieces=args.pieces,
                                 n_max=args.n_max, threshold=args.threshold)
    w.windows = {"central": f.window, "guard": f.cert_Q1.details["guard"]}
    w.record("padding", cf.padding)
    w.record("canonical_residual", cf.residual)
    return qn_bundle(w, f, tol)


# ---------------------------------------------------------------------------
# common-factor


def _shift_certificate(w, key, sf, n_max, threshold):
    w.add(key, sf.shift_matrix())
    w.check("power_norms", f"gelfand_{key}", threshold, matrix=key, n_max=n_max)


def cmd_common_factor(args):
    mats, desc = _load_inputs(args)
    if len({M.shape for M in mats}) != 1:
        raise ConfigError("inputs must share one shape")
    mode = args.mode
    tol = {"residual": 1e-10, "general_residual": 1e-8, "gelfand": args.threshold,
           "cube": 1e-12, "blockdiag": 1e-12}
    w = BundleWriter("common-factor", {"mode": mode, "n_ops": len(mats), "n_max": args.n_max,
                                       "family": desc and desc.to_json()}, tol)
    names = []
    for i, M in enumerate(mats):
        names.append(w.add(f"T{i}", M, is_input=True))

    if mode in ("compact-right", "compact-left"):
        sf = (qn.common_right_factor_compact if mode == "compact-right"
              else qn.common_left_factor_compact)(mats)
        w.add("Q", sf.Q)
        for i, L in enumerate(sf.cofactors):
            w.add(f"L{i}", L)
            lhs = [f"L{i}", "Q"] if mode == "compact-right" else ["Q", f"L{i}"]
            w.check("residual", f"residual_{i}", tol["residual"], lhs=lhs, rhs=[names[i]])
        _shift_certificate(w, "Q_shift", sf, args.n_max, args.threshold)
        w.record("eigenvalues", sf.eigenvalues)
    elif mode == "compact-two-sided":
        ts = qn.two_sided_compact(mats)
        w.add("Q1", ts.Q1)
        w.add("Q2", ts.Q2)
        for i, L in enumerate(ts.cofactors):
            w.add(f"L{i}", L)
            w.check("residual", f"residual_{i}", tol["residual"], lhs=["Q1", f"L{i}", "Q2"],
                    rhs=[names[i]])
        _shift_certificate(w, "Q1_shift", ts.left, args.n_max, args.threshold)
        _shift_certificate(w, "Q2_shift", ts.right, args.n_max, args.threshold)
    elif mode == "general":
        _square_family(mats)
        if desc is not None and desc.kind == "canonical-form-synthetic":
            jcf, _ = families.canonical_synthetic(desc)
        else:
            jcf = joint_canonical_form(mats, k=args.k, balance=True)
        g = qn.factor_joint_form(jcf, n_max=args.n_max)
        m = g.dims[0]
        pad = jcf.forms[0].padding.get("total", 0)
        w.add("V", jcf.V)
        w.add("V_inv", jcf.V_inv)
        for key, M in (("Q1p", g.Q1p), ("Q2p", g.Q2p), ("R", g.R.Q), ("Q", g.Q.Q)):
            w.add(key, M)
        for i, S in enumerate(g.Sp):
            w.add(f"Sp{i}", S)
            Tp = names[i]
            if pad:
                Tp = w.add(f"T{i}_pad", pad_with_zero(mats[i], pad))
            w.check("residual", f"residual_{i}", tol["general_residual"],
                    lhs=["Q1p", f"Sp{i}", "Q2p"], rhs=["V", Tp, "V_inv"])
        w.check("blockdiag_offnorm", "cube_Q1p", tol["blockdiag"], matrix="Q1p", diag="R",
                block=m, power=3)
        w.check("blockdiag_offnorm", "cube_Q2p", tol["blockdiag"], matrix="Q2p", diag="Q",
                block=m, power=3)
        _shift_certificate(w, "R_shift", g.R, args.n_max, args.threshold)
        _shift_certificate(w, "Q_shift", g.Q, args.n_max, args.threshold)
        w.record("h_singular_values", g.h_singular_values)
        w.record("dims", list(g.dims))
    elif mode in ("nilpotent-sandwich", "nilpotent-two-sided"):
        _square_family(mats)
        budget = 0 if args.no_pad else args.budget
        fn = (nil.common_nilpotent_sandwich if mode == "nilpotent-sandwich"
              else nil.common_nilpotent_two_sided)
        fac = fn(mats, budget=budget)
        _nil_certificates(w, fac, tol)
        for i, T in enumerate(mats):
            Tp = w.add(f"T{i}_pad", fac.decomposition.padded(T))
            lhs = (["N", f"N_i{i}", "N"] if mode == "nilpotent-sandwich"
                   else ["N1", f"S_i{i}", "N2"])
            w.check("residual", f"residual_{i}", tol["residual"], lhs=lhs, rhs=[Tp],
                    norm="fro", scale="fro")
            if mode == "nilpotent-two-sided":
                for side, keys in (("left", ["N1", f"S_i{i}"]), ("right", [f"S_i{i}", "N2"])):
                    key = w.add(f"{side}_product{i}", w.payloads[keys[0]] @ w.payloads[keys[1]])
                    w.check("cube_norm", f"cube_{key}", tol["cube"], matrix=key)
                    w.check("nil_index", f"index_{key}", 3, matrix=key)
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    return w


# ---------------------------------------------------------------------------
# verify / generate


def cmd_verify(args):
    n = verify_bundle(args.bundle)
    print(f"ok: {n} certificates reproduced")
    return None


def cmd_generate(args):
    desc = _load_family(args.family)
    mats = families.generate(desc)
    out = Path(args.out)
    if len(mats) == 1 and out.suffix == ".mtx":
        out.parent.mkdir(parents=True, exist_ok=True)
        write_matrix(out, mats[0], comment=json.dumps(desc.to_json(), sort_keys=True))
        print(out)
        return None
    out.mkdir(parents=True, exist_ok=True)
    for i, M in enumerate(mats):
        p = out / f"{desc.kind}_{i}.mtx"
        write_matrix(p, M, comment=json.dumps(desc.to_json(), sort_keys=True))
        print(p)
    return None


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="opfactor", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def inputs(p, many=False):
        p.add_argument("inputs", nargs="*" if many else "?", default=None,
                       help="Matrix Market input file(s)")
        p.add_argument("--family", help="family descriptor (JSON text or file)")
        p.add_argument("--out", required=True, help="bundle directory")

    p = sub.add_parser("factor-nilpotent", help="T = MN with M, N nilpotent")
    inputs(p)
    p.add_argument("--tol", type=float, default=nil.NIL_TOL)
    p.add_argument("--budget", type=int, default=None, help="maximum zero padding")
    p.add_argument("--no-pad", action="store_true", help="forbid zero padding")
    p.set_defaults(func=cmd_factor_nilpotent)

    p = sub.add_parser("factor-qn", help="T = Q1 Q2 with Q1, Q2 quasi-nilpotent")
    inputs(p)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--base", type=float, default=qn.DEFAULT_BASE)
    p.add_argument("--pieces", type=int, default=None)
    p.add_argument("--k", type=int, default=None, help="almost-null vector count")
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--threshold", type=float, default=1e-2)
    p.set_defaults(func=cmd_factor_qn)

    p = sub.add_parser("common-factor", help="common factors for a family")
    inputs(p, many=True)
    p.add_argument("--mode", required=True, choices=[
        "compact-right", "compact-left", "compact-two-sided", "general",
        "nilpotent-sandwich", "nilpotent-two-sided"])
    p.add_argument("--n-max", type=int, default=40)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--no-pad", action="store_true")
    p.set_defaults(func=cmd_common_factor)

    p = sub.add_parser("verify", help="recompute a bundle's certificates")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("generate", help="write a family as Matrix Market")
    p.add_argument("--family", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)
    return ap


def _thread_limit():
    raw = os.environ.get("OPFACTOR_MAX_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"OPFACTOR_MAX_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("OPFACTOR_MAX_THREADS must be positive")
    return n


def run(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        limit = _thread_limit()
        if limit is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=limit):
                writer = args.func(args)
        else:
            writer = args.func(args)
    except (SemiFredholmObstruction, NotEssentiallySingular, RangeInclusionFailed) as exc:
        print(f"obstruction: {exc}", file=sys.stderr)
        return EXIT_OBSTRUCTION
    except (Infeasible, SplitTooShallow) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except VerifyMismatch as exc:
        print(f"mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (ConfigError, BundleError, ShapeMismatch, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if writer is None:
        return EXIT_OK
    writer.write(args.out)
    if not writer.passed:
        print(f"certificates failed: {', '.join(writer.failed())}", file=sys.stderr)
        return EXIT_CERT
    print(args.out)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
