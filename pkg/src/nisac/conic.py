"""Solver-agnostic conic program builder and solve contract.

Programs are held in the standard primal form

    minimize    c^T x
    subject to  A x + s = b,   s in K,

with K a product of zero, nonnegative, second-order, and PSD-triangle cones.
Complex Hermitian PSD matrix variables are declared in their complex dimension
n and represented internally by the real symmetric embedding
[[Re H, -Im H], [Im H, Re H]] of dimension 2n; the builder hides the embedding
(and its doubled trace / duplicated eigenvalues) from callers.

PSD cone slacks use the svec convention: upper triangle, column-major,
off-diagonal entries scaled by sqrt(2). That is Clarabel's native layout; the
SCS adapter permutes rows to SCS's lower-triangle layout.

Power-of-two row/objective scaling is applied before handing data to the
backend so that scale(unscale(x)) round-trips exactly; all reported values and
residuals are in the unscaled problem's units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

_SQRT2 = math.sqrt(2.0)


class ConicError(RuntimeError):
    pass


# -- expressions ----------------------------------------------------------------

class LinExpr:
    """Sparse affine expression sum_c coeffs[c] * x_c + const."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs=None, const=0.0):
        self.coeffs = dict(coeffs) if coeffs else {}
        self.const = float(const)

    def copy(self) -> "LinExpr":
        return LinExpr(self.coeffs, self.const)

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, LinExpr):
            for c, v in other.coeffs.items():
                out.coeffs[c] = out.coeffs.get(c, 0.0) + v
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({c: -v for c, v in self.coeffs.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, LinExpr) else -float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __mul__(self, scalar):
        scalar = float(scalar)
        return LinExpr({c: v * scalar for c, v in self.coeffs.items()}, self.const * scalar)

    __rmul__ = __mul__


def as_expr(x) -> LinExpr:
    return x if isinstance(x, LinExpr) else LinExpr(const=float(x))


def expr_sum(exprs) -> LinExpr:
    out = LinExpr()
    for e in exprs:
        out = out + e
    return out


# -- variables -------------------------------------------------------------------

class ComplexVectorVar:
    """Free complex vector of length n, stored as [Re; Im] real columns."""

    def __init__(self, program, name, n, col0):
        self.program, self.name, self.n, self.col0 = program, name, n, col0

    def re(self, i) -> LinExpr:
        return LinExpr({self.col0 + i: 1.0})

    def im(self, i) -> LinExpr:
        return LinExpr({self.col0 + self.n + i: 1.0})

    def coords(self) -> list[LinExpr]:
        return [LinExpr({self.col0 + t: 1.0}) for t in range(2 * self.n)]

    def inner_parts(self, c) -> tuple[LinExpr, LinExpr]:
        """Real and imaginary parts of c^H f as affine expressions."""
        c = np.asarray(c, dtype=complex)
        re = LinExpr()
        im = LinExpr()
        for i in range(self.n):
            cr, ci = c[i].real, c[i].imag
            if cr:
                re.coeffs[self.col0 + i] = re.coeffs.get(self.col0 + i, 0.0) + cr
                im.coeffs[self.col0 + self.n + i] = im.coeffs.get(self.col0 + self.n + i, 0.0) + cr
            if ci:
                re.coeffs[self.col0 + self.n + i] = re.coeffs.get(self.col0 + self.n + i, 0.0) + ci
                im.coeffs[self.col0 + i] = im.coeffs.get(self.col0 + i, 0.0) - ci
        return re, im

    def inner_re(self, c) -> LinExpr:
        return self.inner_parts(c)[0]

    def _extract(self, x) -> np.ndarray:
        sl = x[self.col0:self.col0 + 2 * self.n]
        return sl[:self.n] + 1j * sl[self.n:]


class HermitianVar:
    """Hermitian PSD matrix variable of complex dimension n.

    Parameterized by n real diagonal entries followed by (Re, Im) pairs of the
    strict upper triangle (row-major). PSD-ness is enforced through one PSD
    cone on the real 2n x 2n embedding; the embedding's block symmetry is
    structural (shared columns), not a constraint.
    """

    def __init__(self, program, name, n, col0):
        self.program, self.name, self.n, self.col0 = program, name, n, col0
        self._pair = {}
        idx = 0
        for i in range(n):
            for j in range(i + 1, n):
                self._pair[(i, j)] = idx
                idx += 1

    @property
    def num_cols(self) -> int:
        return self.n * self.n

    def _diag_col(self, i) -> int:
        return self.col0 + i

    def _re_col(self, i, j) -> int:
        return self.col0 + self.n + 2 * self._pair[(i, j)]

    def _im_col(self, i, j) -> int:
        return self.col0 + self.n + 2 * self._pair[(i, j)] + 1

    def inner(self, a) -> LinExpr:
        """tr(A X) for Hermitian A (a real affine expression)."""
        a = np.asarray(a, dtype=complex)
        gap = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
        if gap > 1e-9 * max(1.0, float(np.max(np.abs(a)))):
            raise ConicError(f"inner() matrix not Hermitian (gap {gap:.2e})")
        a = 0.5 * (a + a.conj().T)
        coeffs = {}
        for i in range(self.n):
            v = a[i, i].real
            if v:
                coeffs[self._diag_col(i)] = v
            for j in range(i + 1, self.n):
                if a[i, j].real:
                    coeffs[self._re_col(i, j)] = 2.0 * a[i, j].real
                if a[i, j].imag:
                    coeffs[self._im_col(i, j)] = 2.0 * a[i, j].imag
        return LinExpr(coeffs)

    def quad_form(self, v) -> LinExpr:
        """v^H X v as an affine expression (real, >= 0 on the PSD cone)."""
        v = np.asarray(v, dtype=complex)
        return self.inner(np.outer(v, v.conj()))

    def trace(self) -> LinExpr:
        return LinExpr({self._diag_col(i): 1.0 for i in range(self.n)})

    def _embedding_entry(self, I, J):
        """(col, coef) of embedding entry (I, J), I <= J, or None if zero."""
        n = self.n
        if J < n:
            i, j = I, J
            return (self._diag_col(i), 1.0) if i == j else (self._re_col(i, j), 1.0)
        if I >= n:
            i, j = I - n, J - n
            return (self._diag_col(i), 1.0) if i == j else (self._re_col(i, j), 1.0)
        i, j = I, J - n  # top-right quadrant: -Im X_{i,j}
        if i == j:
            return None
        if i < j:
            return (self._im_col(i, j), -1.0)
        return (self._im_col(j, i), 1.0)

    def _extract(self, x) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=complex)
        for i in range(self.n):
            out[i, i] = x[self._diag_col(i)]
            for j in range(i + 1, self.n):
                out[i, j] = x[self._re_col(i, j)] + 1j * x[self._im_col(i, j)]
                out[j, i] = np.conj(out[i, j])
        return out


# -- program ----------------------------------------------------------------------

_ZERO, _NONNEG, _SOC, _PSD = "zero", "nonneg", "soc", "psd"


class _Block:
    __slots__ = ("kind", "dim", "matdim", "rows", "cols", "vals", "b")

    def __init__(self, kind, dim, matdim=0):
        self.kind, self.dim, self.matdim = kind, dim, matdim
        self.rows, self.cols, self.vals = [], [], []
        self.b = [0.0] * dim

    def set_row(self, r, expr: LinExpr, scale: float, negate: bool):
        # negate=True encodes s_r = scale*expr (A row = -scale*coeffs, b = scale*const);
        # negate=False encodes the zero-cone equality A x = b (A = coeffs, b = -const).
        sgn = -scale if negate else scale
        for c, v in expr.coeffs.items():
            if v != 0.0:
                self.rows.append(r)
                self.cols.append(c)
                self.vals.append(sgn * v)
        self.b[r] = scale * expr.const if negate else -scale * expr.const


class ConicProgram:
    """Incrementally built conic program; see the module docstring for the form."""

    def __init__(self):
        self._ncols = 0
        self._obj: dict[int, float] = {}
        self._obj_const = 0.0
        self._maximize = False
        self._blocks: list[_Block] = []
        self._vars: dict[str, object] = {}
        self._auto = 0
        self.scaling_record: ScalingRecord | None = None

    # -- variables --

    def _register(self, name, var):
        if name in self._vars:
            raise ConicError(f"duplicate variable name '{name}'")
        self._vars[name] = var
        return var

    def _autoname(self, prefix):
        self._auto += 1
        return f"_{prefix}{self._auto}"

    def scalar(self, name=None) -> LinExpr:
        name = name or self._autoname("s")
        col = self._ncols
        self._ncols += 1
        self._register(name, ("scalar", col))
        return LinExpr({col: 1.0})

    def scalars(self, name, n) -> list[LinExpr]:
        return [self.scalar(f"{name}[{t}]") for t in range(n)]

    def complex_vector(self, name, n) -> ComplexVectorVar:
        var = ComplexVectorVar(self, name, n, self._ncols)
        self._ncols += 2 * n
        self._register(name, var)
        return var

    def hermitian_psd(self, name, n) -> HermitianVar:
        var = HermitianVar(self, name, n, self._ncols)
        self._ncols += var.num_cols
        self._register(name, var)
        # PSD cone on the 2n x 2n real embedding
        dim2 = 2 * n
        block = _Block(_PSD, dim2 * (dim2 + 1) // 2, matdim=dim2)
        r = 0
        for J in range(dim2):
            for I in range(J + 1):
                entry = var._embedding_entry(I, J)
                if entry is not None:
                    col, coef = entry
                    scale = _SQRT2 if I < J else 1.0
                    block.rows.append(r)
                    block.cols.append(col)
                    block.vals.append(-coef * scale)
                r += 1
        self._blocks.append(block)
        return var

    # -- constraints --

    def add_zero(self, expr):
        expr = as_expr(expr)
        block = _Block(_ZERO, 1)
        block.set_row(0, expr, 1.0, negate=False)
        self._blocks.append(block)

    def add_nonneg(self, expr):
        """expr >= 0."""
        expr = as_expr(expr)
        block = _Block(_NONNEG, 1)
        block.set_row(0, expr, 1.0, negate=True)
        self._blocks.append(block)

    def add_soc(self, exprs):
        """exprs[0] >= || exprs[1:] ||_2."""
        exprs = [as_expr(e) for e in exprs]
        if len(exprs) < 2:
            raise ConicError("second-order cone needs at least 2 rows")
        block = _Block(_SOC, len(exprs))
        for r, e in enumerate(exprs):
            block.set_row(r, e, 1.0, negate=True)
        self._blocks.append(block)

    def add_rsoc(self, p, q, zs):
        """2*p*q >= sum_i z_i^2 with p, q >= 0 (rotated second-order cone).

        Encoded as the plain SOC || (p - q, sqrt2 * z) || <= p + q.
        """
        p, q = as_expr(p), as_expr(q)
        self.add_soc([p + q, p - q] + [as_expr(z) * _SQRT2 for z in zs])

    def add_psd(self, mat):
        """Symmetric affine matrix expression `mat` is PSD (real entries)."""
        k = len(mat)
        block = _Block(_PSD, k * (k + 1) // 2, matdim=k)
        r = 0
        for J in range(k):
            for I in range(J + 1):
                scale = _SQRT2 if I < J else 1.0
                block.set_row(r, as_expr(mat[I][J]), scale, negate=True)
                r += 1
        self._blocks.append(block)

    def minimize(self, expr):
        expr = as_expr(expr)
        self._obj = dict(expr.coeffs)
        self._obj_const = expr.const
        self._maximize = False

    def maximize(self, expr):
        self.minimize(as_expr(expr) * -1.0)
        self._maximize = True

    # -- assembly --

    def _canonical_blocks(self):
        zeros = [bl for bl in self._blocks if bl.kind == _ZERO]
        nonnegs = [bl for bl in self._blocks if bl.kind == _NONNEG]
        socs = [bl for bl in self._blocks if bl.kind == _SOC]
        psds = [bl for bl in self._blocks if bl.kind == _PSD]
        return zeros + nonnegs + socs + psds

    def assemble(self):
        """Canonical (c, A, b, cone spec, block layout) in unscaled units."""
        blocks = self._canonical_blocks()
        offsets = []
        nrows = 0
        for bl in blocks:
            offsets.append(nrows)
            nrows += bl.dim
        rows = np.concatenate([np.asarray(bl.rows, dtype=np.int64) + off
                               for bl, off in zip(blocks, offsets)]) if blocks else np.zeros(0, np.int64)
        cols = np.concatenate([np.asarray(bl.cols, dtype=np.int64) for bl in blocks]) \
            if blocks else np.zeros(0, np.int64)
        vals = np.concatenate([np.asarray(bl.vals, dtype=float) for bl in blocks]) \
            if blocks else np.zeros(0)
        b = np.concatenate([np.asarray(bl.b, dtype=float) for bl in blocks]) if blocks else np.zeros(0)
        c = np.zeros(self._ncols)
        for col, v in self._obj.items():
            c[col] = v
        A = sparse.coo_matrix((vals, (rows, cols)), shape=(nrows, self._ncols))
        layout = [(bl.kind, off, bl.dim, bl.matdim) for bl, off in zip(blocks, offsets)]
        return c, A, b, layout

    def export(self) -> dict:
        """Documented sparse text form of the built (unscaled) program."""
        c, A, b, layout = self.assemble()
        A = A.tocoo()
        order = np.lexsort((A.col, A.row))
        cones = []
        for kind, _off, dim, matdim in layout:
            if kind == _PSD:
                cones.append({"type": "psd", "matrix_dim": matdim})
            else:
                cones.append({"type": kind, "dim": dim})
        # the objective is stored (and exported) in minimization form; "sense"
        # records the caller's original intent
        return {
            "format": "nisac-conic-v1",
            "sense": "maximize" if self._maximize else "minimize",
            "num_vars": self._ncols,
            "objective": {"coeffs": [[int(col), float(self._obj[col])] for col in sorted(self._obj)],
                          "constant": self._obj_const},
            "A": [[int(A.row[t]), int(A.col[t]), float(A.data[t])] for t in order],
            "b": [float(v) for v in b],
            "cones": cones,
        }

    def export_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.export(), fh, indent=1)

    def extract(self, name, x):
        var = self._vars[name]
        if isinstance(var, tuple) and var[0] == "scalar":
            return float(x[var[1]])
        return var._extract(x)


# -- epigraph helpers ---------------------------------------------------------------

def trace_inverse_epigraph(prog: ConicProgram, fim) -> LinExpr:
    """Add tr(inverse) epigraph for an affine 2x2 symmetric expression.

    fim is [[f11, f12], [f12, f22]] of LinExpr/float. Introduces a symmetric 2x2
    U and the 4x4 PSD block [[U, I], [I, fim]]; returns t = tr(U), which at a
    minimizing optimum equals tr(fim^-1).
    """
    u11 = prog.scalar()
    u12 = prog.scalar()
    u22 = prog.scalar()
    f11, f12, f22 = fim[0][0], fim[0][1], fim[1][1]
    prog.add_psd([
        [u11, u12, 1.0, 0.0],
        [u12, u22, 0.0, 1.0],
        [1.0, 0.0, f11, f12],
        [0.0, 1.0, f12, f22],
    ])
    return u11 + u22


def embed_hermitian(h) -> np.ndarray:
    """Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian H.

    H is PSD iff the embedding is PSD; the trace doubles and every eigenvalue
    appears twice.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("embed_hermitian expects a square matrix")
    gap = float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0
    if gap > 1e-9 * max(1.0, float(np.max(np.abs(h)))):
        raise ValueError(f"matrix not Hermitian within tolerance (gap {gap:.2e})")
    h = 0.5 * (h + h.conj().T)
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


# -- solving -------------------------------------------------------------------------

@dataclass
class ConicSettings:
    accuracy: float = 1e-8
    max_iters: int | None = None  # backend default: 200 (interior point), 1e5 (first order)
    backend: str = "clarabel"
    scale: bool = True
    verbose: bool = False


@dataclass
class ScalingRecord:
    row_scale: np.ndarray
    col_scale: np.ndarray
    obj_scale: float

    def scale_primal(self, x):
        return x / self.col_scale

    def unscale_primal(self, x):
        return x * self.col_scale


@dataclass
class ConicSolution:
    status: str            # optimal | infeasible | unbounded | inaccurate | numerical-failure
    objective: float
    values: dict
    primal_residual: float
    dual_residual: float
    iterations: int
    solve_time_s: float
    backend: str
    backend_status: str
    x: np.ndarray | None = field(default=None, repr=False)

    def value(self, expr: LinExpr) -> float:
        if self.x is None:
            return math.nan
        return sum(v * self.x[c] for c, v in expr.coeffs.items()) + expr.const


def _pow2(v: float, lo=-20, hi=20) -> float:
    if v <= 0.0 or not math.isfinite(v):
        return 1.0
    e = int(round(math.log2(v)))
    return 2.0 ** min(hi, max(lo, e))


def _row_scales(A_coo, b, layout):
    """One power-of-two factor per row; uniform within each SOC/PSD block."""
    nrows = len(b)
    rowmax = np.zeros(nrows)
    np.maximum.at(rowmax, A_coo.row, np.abs(A_coo.data))
    d = np.ones(nrows)
    for kind, off, dim, _ in layout:
        if kind in (_ZERO, _NONNEG):
            for r in range(off, off + dim):
                d[r] = 1.0 / _pow2(rowmax[r])
        else:
            m = rowmax[off:off + dim].max() if dim else 1.0
            d[off:off + dim] = 1.0 / _pow2(m)
    return d


def _svec_to_mat(s, n):
    out = np.zeros((n, n))
    t = 0
    for J in range(n):
        for I in range(J + 1):
            if I == J:
                out[I, J] = s[t]
            else:
                out[I, J] = out[J, I] = s[t] / _SQRT2
            t += 1
    return out


def _primal_violation(s, layout):
    worst = 0.0
    for kind, off, dim, matdim in layout:
        blk = s[off:off + dim]
        if kind == _ZERO:
            v = float(np.max(np.abs(blk))) if dim else 0.0
        elif kind == _NONNEG:
            v = float(max(0.0, -blk.min())) if dim else 0.0
        elif kind == _SOC:
            v = float(max(0.0, np.linalg.norm(blk[1:]) - blk[0]))
        else:
            v = float(max(0.0, -np.linalg.eigvalsh(_svec_to_mat(blk, matdim))[0]))
        worst = max(worst, v)
    return worst


def _scs_permutation(layout):
    """Row permutation from the canonical (upper col-major) PSD layout to
    SCS's lower-triangle col-major layout; identity elsewhere."""
    total = sum(dim for _, _, dim, _ in layout)
    perm = np.arange(total)
    for kind, off, dim, n in layout:
        if kind != _PSD:
            continue
        idx = []
        for c in range(n):
            for r in range(c, n):
                idx.append(r * (r + 1) // 2 + c)  # canonical position of (c, r)
        perm[off:off + dim] = off + np.asarray(idx)
    return perm


_CLARABEL_STATUS = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "AlmostSolved": "inaccurate",
    "MaxIterations": "inaccurate",
    "MaxTime": "inaccurate",
}


def solve(prog: ConicProgram, settings: ConicSettings | None = None) -> ConicSolution:
    """Solve a built program; statuses are values, never exceptions."""
    settings = settings or ConicSettings()
    c, A_coo, b, layout = prog.assemble()
    nrows = len(b)

    if settings.scale:
        d = _row_scales(A_coo, b, layout)
        obj_scale = 1.0 / _pow2(float(np.max(np.abs(c))) if c.size else 1.0)
        record = ScalingRecord(row_scale=d, col_scale=np.ones(prog._ncols), obj_scale=obj_scale)
        A_sc = sparse.coo_matrix((A_coo.data * d[A_coo.row], (A_coo.row, A_coo.col)),
                                 shape=A_coo.shape)
        b_sc = b * d
        c_sc = c * obj_scale
    else:
        record = ScalingRecord(np.ones(nrows), np.ones(prog._ncols), 1.0)
        A_sc, b_sc, c_sc = A_coo, b, c
    prog.scaling_record = record

    if settings.backend == "clarabel":
        raw = _solve_clarabel(c_sc, A_sc, b_sc, layout, settings)
    elif settings.backend == "scs":
        raw = _solve_scs(c_sc, A_sc, b_sc, layout, settings)
    else:
        raise ConicError(f"unknown backend '{settings.backend}'")

    status, x_sc, z_sc, iters, solve_time, backend_status = raw
    if x_sc is None or status in ("infeasible", "unbounded"):
        return ConicSolution(status=status, objective=math.nan, values={},
                             primal_residual=math.nan, dual_residual=math.nan,
                             iterations=iters, solve_time_s=solve_time,
                             backend=settings.backend, backend_status=backend_status)

    x = record.unscale_primal(np.asarray(x_sc))
    z = np.asarray(z_sc) * record.row_scale / record.obj_scale
    s_implied = b - A_coo.tocsr() @ x
    primal_res = _primal_violation(s_implied, layout)
    dual_res = float(np.max(np.abs(c + A_coo.tocsr().T @ z))) if nrows else 0.0
    obj = float(c @ x) + prog._obj_const
    if prog._maximize:
        obj = -obj
    values = {name: prog.extract(name, x) for name in prog._vars}
    return ConicSolution(status=status, objective=obj, values=values,
                         primal_residual=primal_res, dual_residual=dual_res,
                         iterations=iters, solve_time_s=solve_time,
                         backend=settings.backend, backend_status=backend_status, x=x)


def _solve_clarabel(c, A_coo, b, layout, settings):
    import clarabel

    cones = []
    for kind, _off, dim, matdim in layout:
        if kind == _ZERO:
            cones.append(clarabel.ZeroConeT(dim))
        elif kind == _NONNEG:
            cones.append(clarabel.NonnegativeConeT(dim))
        elif kind == _SOC:
            cones.append(clarabel.SecondOrderConeT(dim))
        else:
            cones.append(clarabel.PSDTriangleConeT(matdim))
    st = clarabel.DefaultSettings()
    st.verbose = settings.verbose
    st.tol_gap_abs = settings.accuracy
    st.tol_gap_rel = settings.accuracy
    st.tol_feas = settings.accuracy
    st.max_iter = settings.max_iters or 200
    P = sparse.csc_matrix((len(c), len(c)))
    solver = clarabel.DefaultSolver(P, c, A_coo.tocsc(), b, cones, st)
    sol = solver.solve()
    backend_status = str(sol.status)
    status = _CLARABEL_STATUS.get(backend_status, "numerical-failure")
    x = np.asarray(sol.x) if status in ("optimal", "inaccurate") else None
    z = np.asarray(sol.z) if x is not None else None
    return status, x, z, int(sol.iterations), float(sol.solve_time), backend_status


def _solve_scs(c, A_coo, b, layout, settings):
    import scs

    perm = _scs_permutation(layout)
    inv = np.argsort(perm)
    rows = inv[A_coo.row]  # canonical row r lands at SCS row inv[r]
    A = sparse.coo_matrix((A_coo.data, (rows, A_coo.col)), shape=A_coo.shape).tocsc()
    b_p = np.asarray(b)[perm]
    cone = {}
    nz = sum(dim for kind, _, dim, _ in layout if kind == _ZERO)
    nl = sum(dim for kind, _, dim, _ in layout if kind == _NONNEG)
    if nz:
        cone["z"] = nz
    if nl:
        cone["l"] = nl
    socs = [dim for kind, _, dim, _ in layout if kind == _SOC]
    if socs:
        cone["q"] = socs
    psds = [matdim for kind, _, _, matdim in layout if kind == _PSD]
    if psds:
        cone["s"] = psds
    solver = scs.SCS(dict(A=A, b=b_p, c=np.asarray(c)), cone,
                     eps_abs=settings.accuracy, eps_rel=settings.accuracy,
                     max_iters=settings.max_iters or 100000, verbose=settings.verbose)
    out = solver.solve()
    raw = out["info"]["status"]
    if raw == "solved":
        status = "optimal"
    elif raw.startswith("solved"):
        status = "inaccurate"
    elif "infeasible" in raw:
        status = "infeasible"
    elif "unbounded" in raw:
        status = "unbounded"
    else:
        status = "numerical-failure"
    x = out["x"] if status in ("optimal", "inaccurate") else None
    z = out["y"][inv] if x is not None else None  # back to canonical row order
    return status, x, z, int(out["info"]["iter"]), float(out["info"]["solve_time"]) / 1e3, raw
