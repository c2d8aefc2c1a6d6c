"""Compiled fast path: postfix programs, forward-mode residuals and LM.

A skeleton is flattened into a postfix program (opcode, argument, constant
pool) which a numba-jitted stack machine evaluates row by row together with
the derivatives with respect to every parameter. The Levenberg-Marquardt
loop runs inside the same compiled code, one view at a time.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .expr import Binary, Const, Node, Param, Unary, Var

OP_VAR, OP_CONST, OP_PARAM = 0, 1, 2
UNARY_CODES = {"neg": 10, "square": 11, "exp": 12, "sqrt": 13, "sin": 14, "log": 15, "abs": 16}
BINARY_CODES = {"add": 20, "sub": 21, "mul": 22, "div": 23, "pow": 24}

# status codes of lm_view
STATUS_RUNNING, STATUS_CONVERGED, STATUS_MAXITER, STATUS_NONFINITE = 0, 1, 2, 3


def compile_program(node: Node):
    """Postfix ``(codes, args, consts)`` arrays for ``node``."""
    codes: list = []
    args: list = []
    consts: list = []

    def emit(n):
        if isinstance(n, Var):
            codes.append(OP_VAR)
            args.append(n.index)
        elif isinstance(n, Param):
            codes.append(OP_PARAM)
            args.append(n.index)
        elif isinstance(n, Const):
            codes.append(OP_CONST)
            args.append(len(consts))
            consts.append(n.value)
        elif isinstance(n, Unary):
            emit(n.child)
            codes.append(UNARY_CODES[n.op])
            args.append(0)
        else:
            emit(n.left)
            emit(n.right)
            codes.append(BINARY_CODES[n.op])
            args.append(0)

    emit(node)
    return (np.array(codes, dtype=np.int64), np.array(args, dtype=np.int64),
            np.array(consts, dtype=np.float64))


@njit(cache=True, error_model="numpy")
def residuals(codes, args, consts, X, y, theta, r, J, need_grad):
    """Fill ``r = f(X; theta) - y`` and (optionally) ``J = dr/dtheta``.

    Returns False as soon as a residual is non-finite.
    """
    n = theta.shape[0]
    L = codes.shape[0]
    sv = np.empty(L)
    sg = np.empty((L, n))
    ok = True
    for row in range(X.shape[0]):
        sp = 0
        for pc in range(L):
            c = codes[pc]
            if c == 0:
                sv[sp] = X[row, args[pc]]
                if need_grad:
                    for j in range(n):
                        sg[sp, j] = 0.0
                sp += 1
            elif c == 1:
                sv[sp] = consts[args[pc]]
                if need_grad:
                    for j in range(n):
                        sg[sp, j] = 0.0
                sp += 1
            elif c == 2:
                sv[sp] = theta[args[pc]]
                if need_grad:
                    for j in range(n):
                        sg[sp, j] = 0.0
                    sg[sp, args[pc]] = 1.0
                sp += 1
            elif c < 20:
                a = sv[sp - 1]
                if c == 10:
                    v = -a
                    d = -1.0
                elif c == 11:
                    v = a * a
                    d = 2.0 * a
                elif c == 12:
                    v = math.inf if a > 709.78 else math.exp(a)
                    d = v
                elif c == 13:
                    if a >= 0.0:
                        v = math.sqrt(a)
                        d = 0.5 / v if v > 0.0 else math.inf
                    else:
                        v = math.nan
                        d = math.nan
                elif c == 14:
                    v = math.sin(a)
                    d = math.cos(a)
                elif c == 15:
                    if a > 0.0:
                        v = math.log(a)
                    elif a == 0.0:
                        v = -math.inf
                    else:
                        v = math.nan
                    d = 1.0 / a
                else:
                    v = abs(a)
                    d = 1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0)
                sv[sp - 1] = v
                if need_grad:
                    for j in range(n):
                        gj = sg[sp - 1, j]
                        if gj != 0.0:
                            sg[sp - 1, j] = gj * d
            else:
                b = sv[sp - 1]
                a = sv[sp - 2]
                if c == 20:
                    v = a + b
                elif c == 21:
                    v = a - b
                elif c == 22:
                    v = a * b
                elif c == 23:
                    v = a / b
                else:
                    v = _pow(a, b)
                if need_grad:
                    for j in range(n):
                        ga = sg[sp - 2, j]
                        gb = sg[sp - 1, j]
                        if c == 20:
                            g = ga + gb
                        elif c == 21:
                            g = ga - gb
                        elif c == 22:
                            g = 0.0
                            if ga != 0.0:
                                g += ga * b
                            if gb != 0.0:
                                g += gb * a
                        elif c == 23:
                            g = 0.0
                            if ga != 0.0:
                                g += ga / b
                            if gb != 0.0:
                                g -= gb * v / b
                        else:
                            g = 0.0
                            if ga != 0.0:
                                g += ga * b * _pow(a, b - 1.0)
                            if gb != 0.0:
                                g += gb * v * (math.log(a) if a > 0.0 else math.nan)
                        sg[sp - 2, j] = g
                sv[sp - 2] = v
                sp -= 1
        res = sv[0] - y[row]
        r[row] = res
        if need_grad:
            for j in range(n):
                J[row, j] = sg[0, j]
        if not math.isfinite(res):
            ok = False
            if not need_grad:
                return False
    return ok


@njit(cache=True, error_model="numpy")
def _pow(a, b):
    if a < 0.0 and b != math.floor(b):
        return math.nan
    if a == 0.0 and b < 0.0:
        return math.inf
    try_big = b * math.log(abs(a)) if a != 0.0 else -math.inf
    if try_big > 709.8:
        if a < 0.0 and b % 2.0 == 1.0:
            return -math.inf
        return math.inf
    return a**b


@njit(cache=True, error_model="numpy")
def _sumsq(r):
    s = 0.0
    for i in range(r.shape[0]):
        s += r[i] * r[i]
    return s / r.shape[0]


@njit(cache=True, error_model="numpy")
def _solve(M, g, out):
    """Gaussian elimination with partial pivoting; False if singular."""
    n = M.shape[0]
    A = M.copy()
    b = g.copy()
    for k in range(n):
        p = k
        big = abs(A[k, k])
        for i in range(k + 1, n):
            if abs(A[i, k]) > big:
                big = abs(A[i, k])
                p = i
        if not big > 0.0 or not math.isfinite(big):
            return False
        if p != k:
            for j in range(n):
                t = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = t
            t = b[k]
            b[k] = b[p]
            b[p] = t
        for i in range(k + 1, n):
            f = A[i, k] / A[k, k]
            if f != 0.0:
                for j in range(k, n):
                    A[i, j] -= f * A[k, j]
                b[i] -= f * b[k]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, n):
            s -= A[i, j] * out[j]
        out[i] = s / A[i, i]
        if not math.isfinite(out[i]):
            return False
    return True


@njit(cache=True, error_model="numpy")
def mse_kernel(codes, args, consts, X, y, theta):
    r = np.empty(X.shape[0])
    J = np.empty((0, 0))
    if not residuals(codes, args, consts, X, y, theta, r, J, False):
        return math.nan
    return _sumsq(r)


@njit(cache=True, error_model="numpy")
def lm_view(codes, args, consts, X, y, theta0, max_iter, tol, lambda0, lambda_max,
            theta_out, history):
    """Levenberg-Marquardt on one view.

    Damping starts at ``lambda0``, is divided by 10 after an accepted step
    and multiplied by 10 after a rejected one. Stops when an accepted step
    changes the loss by less than ``tol``, after ``max_iter`` iterations,
    or immediately if the loss at ``theta0`` is not finite.

    Returns ``(loss, iterations, status, n_history)``.
    """
    p = X.shape[0]
    n = theta0.shape[0]
    theta = theta0.copy()
    r = np.empty(p)
    J = np.empty((p, n))
    r_new = np.empty(p)
    J_new = np.empty((p, n))
    A = np.empty((n, n))
    M = np.empty((n, n))
    g = np.empty(n)
    step = np.empty(n)
    trial = np.empty(n)
    for j in range(n):
        theta_out[j] = theta[j]

    if not residuals(codes, args, consts, X, y, theta, r, J, True):
        history[0] = math.nan
        return math.nan, 0, STATUS_NONFINITE, 1
    loss = _sumsq(r)
    history[0] = loss
    nh = 1
    if not math.isfinite(loss):
        return math.nan, 0, STATUS_NONFINITE, nh
    lam = lambda0
    it = 0
    status = STATUS_RUNNING
    need_normal = True
    while status == STATUS_RUNNING:
        if it >= max_iter:
            status = STATUS_MAXITER
            break
        if need_normal:
            finite = True
            for a in range(n):
                s = 0.0
                for i in range(p):
                    s += J[i, a] * r[i]
                g[a] = s
                if not math.isfinite(s):
                    finite = False
                for b in range(a, n):
                    s = 0.0
                    for i in range(p):
                        s += J[i, a] * J[i, b]
                    A[a, b] = s
                    A[b, a] = s
                    if not math.isfinite(s):
                        finite = False
            if not finite:
                status = STATUS_MAXITER
                break
            dmax = 1.0
            for a in range(n):
                if A[a, a] > dmax:
                    dmax = A[a, a]
            need_normal = False
        for a in range(n):
            for b in range(n):
                M[a, b] = A[a, b]
            d = A[a, a]
            if d < 1e-12 * dmax:
                d = 1e-12 * dmax
            M[a, a] += lam * d
        it += 1
        solved = _solve(M, g, step)
        accepted = False
        if solved:
            for j in range(n):
                trial[j] = theta[j] - step[j]
            # the Jacobian is only needed once a step is accepted
            if residuals(codes, args, consts, X, y, trial, r_new, J_new, False):
                new = _sumsq(r_new)
                if math.isfinite(new) and new <= loss:
                    accepted = True
                    old = loss
                    loss = new
                    for j in range(n):
                        theta[j] = trial[j]
                    residuals(codes, args, consts, X, y, theta, r, J, True)
                    history[nh] = loss
                    nh += 1
                    need_normal = True
                    lam = lam / 10.0
                    if lam < 1e-300:
                        lam = 1e-300
                    if old - new < tol or new == 0.0:
                        status = STATUS_CONVERGED
        if not accepted:
            lam *= 10.0
            tiny = True
            if solved:
                sn = 0.0
                tn = 0.0
                for j in range(n):
                    sn += step[j] * step[j]
                    tn += theta[j] * theta[j]
                tiny = math.sqrt(sn) <= 1e-15 * (math.sqrt(tn) + 1e-15)
            if lam > lambda_max or (solved and tiny):
                status = STATUS_CONVERGED
    for j in range(n):
        theta_out[j] = theta[j]
    return loss, it, status, nh


@njit(cache=True, error_model="numpy")
def lm_views(codes, args, consts, X, y, offsets, theta0, max_iter, tol, lambda0,
             lambda_max, thetas, losses, iters, statuses, histories, n_hist):
    """``lm_view`` on each row block ``offsets[i]:offsets[i + 1]``."""
    for i in range(offsets.shape[0] - 1):
        lo = offsets[i]
        hi = offsets[i + 1]
        loss, it, status, nh = lm_view(codes, args, consts, X[lo:hi], y[lo:hi], theta0,
                                       max_iter, tol, lambda0, lambda_max,
                                       thetas[i], histories[i])
        losses[i] = loss
        iters[i] = it
        statuses[i] = status
        n_hist[i] = nh
