"""Continuum limit of the market.

With a unit mass of schools and students arriving at rate one, the fraction
``x`` of taken schools obeys ``x' = 1 - x**d`` with ``x(0) = 0``. With ``q``
seats per school the state also tracks the fractions ``y[k]`` of schools
holding exactly ``k`` students:

    y0' = -g y0,    yk' = g (y[k-1] - yk),    x' = g y[q-1],
    g = (1 - x**d) / (1 - x).

For ``d = 1`` this is solved by the Erlang(q, 1) law, and for general ``d``
the solution is the ``d = 1`` one run on a rescaled clock ``tau`` with
``tau' = g(x1(tau))``.

All integration is fixed-step classical RK4; the integral identity
``t = int_0^x du / (1 - u**d)`` gives an independent check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, NotFoundError, SolverError
from .report import Status, VerificationReport

MAX_STEP = 1e-3


@dataclass(frozen=True, eq=False)
class OdeSolution:
    d: float
    q: int
    step: float
    t_grid: np.ndarray
    x: np.ndarray
    x_prime: np.ndarray
    y: np.ndarray | None = None      # (points, q), q > 1 only
    tau: np.ndarray | None = None    # clock of the rescaled construction

    @property
    def match_prob(self) -> np.ndarray:
        """Limit probability that the student arriving at t is matched."""
        return 1.0 - self.x ** self.d

    def at(self, t) -> np.ndarray:
        """x at arbitrary times by cubic Hermite interpolation of the grid."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_grid[0] - 1e-12) or np.any(t > self.t_grid[-1] + 1e-12):
            raise DomainError("interpolation outside the solved interval")
        idx = np.clip(np.searchsorted(self.t_grid, t, side="right") - 1, 0, self.t_grid.size - 2)
        t0, t1 = self.t_grid[idx], self.t_grid[idx + 1]
        h = t1 - t0
        s = (t - t0) / h
        x0, x1 = self.x[idx], self.x[idx + 1]
        m0, m1 = self.x_prime[idx] * h, self.x_prime[idx + 1] * h
        s2, s3 = s * s, s * s * s
        return ((2 * s3 - 3 * s2 + 1) * x0 + (s3 - 2 * s2 + s) * m0
                + (-2 * s3 + 3 * s2) * x1 + (s3 - s2) * m1)

    def prime_at(self, t) -> np.ndarray:
        """x' at arbitrary times (one-seat market only)."""
        if self.q != 1:
            raise DomainError("x' is not a function of x alone when q > 1")
        return 1.0 - self.at(t) ** self.d


def _grid(t_max: float, step: float) -> tuple[int, float]:
    if t_max < 0:
        raise DomainError("t_max must be >= 0")
    if step <= 0:
        raise DomainError("step must be positive")
    steps = max(1, math.ceil(t_max / step - 1e-9))
    return steps, t_max / steps


def _check_d(d: float) -> float:
    d = float(d)
    if not d >= 1:
        raise DomainError(f"d must be >= 1, got {d}")
    return d


def rk4(f, y0: float, t_max: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Classical fixed-step RK4 for a scalar autonomous ODE y' = f(y).

    No step-size limit; the public solvers enforce their own.
    """
    steps, h = _grid(t_max, step)
    ys = [y0] * (steps + 1)
    y = y0
    half = 0.5 * h
    for i in range(1, steps + 1):
        k1 = f(y)
        k2 = f(y + half * k1)
        k3 = f(y + half * k2)
        k4 = f(y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ys[i] = y
    t = np.linspace(0.0, steps * h, steps + 1)
    return t, np.array(ys)


def _rk4_system(f, y0: list[float], t_max: float, step: float):
    steps, h = _grid(t_max, step)
    out = [y0]
    y = y0
    half = 0.5 * h
    sixth = h / 6.0
    for _ in range(steps):
        k1 = f(y)
        k2 = f([a + half * b for a, b in zip(y, k1)])
        k3 = f([a + half * b for a, b in zip(y, k2)])
        k4 = f([a + h * b for a, b in zip(y, k3)])
        y = [a + sixth * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
             for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        out.append(y)
    t = np.linspace(0.0, steps * h, steps + 1)
    return t, np.array(out)


def _one_seat_rate(d: float):
    if d == 1.0:
        return lambda x: 1.0 - x
    if d == 2.0:
        return lambda x: 1.0 - x * x
    return lambda x: 1.0 - x ** d if x > 0 else 1.0


def solve_ivp(d: float, t_max: float, step: float = MAX_STEP, validate: bool = True) -> OdeSolution:
    """Integrate ``x' = 1 - x**d`` from ``x(0) = 0`` up to ``t_max``."""
    d = _check_d(d)
    if step > MAX_STEP:
        raise DomainError(f"step must be <= {MAX_STEP}, got {step}")
    t, x = rk4(_one_seat_rate(d), 0.0, t_max, step)
    if np.any(x < -1e-9) or np.any(x > 1.0 + 1e-9):
        raise SolverError("x left [0, 1]; step too large")
    x = np.clip(x, 0.0, None)
    sol = OdeSolution(d, 1, float(t[1] - t[0]), t, x, 1.0 - x ** d)
    if validate:
        for probe in (0.5, 1.0, 2.0):
            if probe > t_max:
                break
            back = invert_integral(float(sol.at(probe)), d)
            if abs(back - probe) > 1e-6:
                raise SolverError(f"integral check failed at t={probe}: got {back}")
    return sol


def _pole_free_rate(u: float, d: float) -> float:
    # 1/(1 - u**d) minus its simple pole 1/(d (1 - u)) at u = 1
    s = 1.0 - u
    if s < 1e-6:
        return (d - 1.0) / (2.0 * d)
    return -1.0 / math.expm1(d * math.log1p(-s)) - 1.0 / (d * s)


def invert_integral(x_target: float, d: float) -> float:
    """Time at which the continuum reaches ``x_target``, by quadrature.

    The pole of the integrand at 1 is integrated in closed form, so the
    quadrature only sees a bounded function.
    """
    d = _check_d(d)
    if not 0.0 <= x_target < 1.0:
        raise DomainError(f"x_target must lie in [0, 1), got {x_target}")
    if x_target == 0.0:
        return 0.0
    val, err = integrate.quad(
        _pole_free_rate, 0.0, x_target, args=(d,), epsabs=1e-13, epsrel=1e-12, limit=200,
    )
    if err > 1e-9:
        raise SolverError(f"quadrature did not converge (error estimate {err:g})")
    return val - math.log1p(-x_target) / d


def crossing_time(d: float, l: float, tol: float = 1e-4, t_hi: float = 5.0) -> float:
    """First t > 1 where the match rates x'_l and x'_d cross.

    The difference ``x'_l - x'_d`` is scanned on the solver grid for its
    first sign change after t = 1 and the bracket is then bisected.
    """
    d, l = _check_d(d), _check_d(l)
    if not d < l:
        raise DomainError(f"need d < l, got d={d}, l={l}")
    sd = solve_ivp(d, t_hi, validate=False)
    sl = solve_ivp(l, t_hi, validate=False)

    def gap(t):
        return float(sl.prime_at(t) - sd.prime_at(t))

    g = sl.x_prime - sd.x_prime
    after = np.flatnonzero((sd.t_grid >= 1.0)[:-1] & (g[:-1] >= 0) & (g[1:] < 0))
    if after.size == 0:
        raise NotFoundError(f"no crossing of x'_{l:g} and x'_{d:g} on [1, {t_hi:g}]")
    lo, hi = sd.t_grid[after[0]], sd.t_grid[after[0] + 1]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def xd1_bounds(d: float) -> tuple[float, float]:
    """Lower and upper bounds on x_d(1)."""
    d = _check_d(d)
    return ((2 * d + 1) / (4 * d + 1)) ** (1 / d), ((d + 1) / (2 * d + 1)) ** (1 / d)


def x_at_one(d: float, step: float = 1e-4) -> float:
    return float(solve_ivp(d, 1.0, step, validate=False).x[-1])


def integral_condition(d: float, upper: float | None = None) -> float:
    """``int_0^x (1 + ln u) / (1 - u**d) du`` with ``x = x_d(1)`` by default.

    The integrand has an integrable log singularity at 0, which the
    adaptive extrapolating quadrature handles directly.
    """
    d = _check_d(d)
    x = x_at_one(d) if upper is None else float(upper)
    if not 0.0 <= x < 1.0:
        raise DomainError("upper limit must lie in [0, 1)")
    if x == 0.0:
        return 0.0
    val, err = integrate.quad(
        lambda u: (1.0 + math.log(u)) / (1.0 - u ** d) if u > 0 else -math.inf,
        0.0, x, epsabs=1e-12, epsrel=1e-10, limit=200,
    )
    if not err < 1e-8:
        raise SolverError(f"quadrature did not converge (error estimate {err:g})")
    return val


# -- several seats per school -------------------------------------------------

def gamma(x: float, d: float, free: float | None = None) -> float:
    """Matching rate per free-seat school, ``(1 - x**d) / (1 - x)``.

    ``free`` is ``1 - x`` when the caller has it without cancellation.
    """
    if float(d).is_integer():
        acc = 0.0
        for _ in range(int(d)):
            acc = acc * x + 1.0
        return acc
    s = 1.0 - x if free is None else free
    if s >= 1.0:
        return 1.0
    if s < 1e-6:
        return d * (1.0 - (d - 1.0) * s / 2.0)
    return -math.expm1(d * math.log1p(-s)) / s


def erlang_solution(t, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact d = 1 multi-seat solution: ``(x, y)`` with ``y[:, k] = t**k e**-t / k!``."""
    t = np.asarray(t, dtype=float)
    y = np.empty(t.shape + (q,))
    term = np.exp(-t)
    for k in range(q):
        if k:
            term = term * t / k
        y[..., k] = term
    return 1.0 - y.sum(axis=-1), y


def _check_q(q: int) -> int:
    if int(q) != q or q < 1:
        raise DomainError(f"q must be a positive integer, got {q}")
    return int(q)


def multi_seat_solve(d: float, q: int, t_max: float, step: float = MAX_STEP) -> OdeSolution:
    """Integrate the (q + 1)-dimensional multi-seat system directly."""
    d, q = _check_d(d), _check_q(q)
    if step > MAX_STEP:
        raise DomainError(f"step must be <= {MAX_STEP}, got {step}")

    def rhs(state):
        ys, x = state[:-1], state[-1]
        g = gamma(x, d, sum(ys))
        out = [-g * ys[0]]
        for k in range(1, q):
            out.append(g * (ys[k - 1] - ys[k]))
        out.append(g * ys[-1])
        return out

    t, states = _rk4_system(rhs, [1.0] + [0.0] * (q - 1) + [0.0], t_max, step)
    y, x = states[:, :-1], states[:, -1]
    drift = np.abs(x + y.sum(axis=1) - 1.0).max()
    if drift > 1e-6:
        raise SolverError(f"mass conservation violated by {drift:g}")
    if np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
        raise SolverError("x left [0, 1]")
    x_prime = np.array([rhs(s)[-1] for s in states])
    return OdeSolution(d, q, float(t[1] - t[0]), t, x, x_prime, y=y)


def tau_rescaled_solve(d: float, q: int, t_max: float, step: float = MAX_STEP) -> OdeSolution:
    """Multi-seat solution as the Erlang solution on the clock ``tau``."""
    d, q = _check_d(d), _check_q(q)
    if step > MAX_STEP:
        raise DomainError(f"step must be <= {MAX_STEP}, got {step}")
    inv_fact = [1.0 / math.factorial(k) for k in range(q)]

    def free_fraction(tau):
        acc = 0.0
        for c in reversed(inv_fact):
            acc = acc * tau + c
        return math.exp(-tau) * acc

    if d == 1.0:
        def rate(tau):
            return 1.0
    else:
        def rate(tau):
            s = free_fraction(tau)
            return gamma(1.0 - s, d, s)

    t, tau = rk4(rate, 0.0, t_max, step)
    x, y = erlang_solution(tau, q)
    g = np.array([rate(v) for v in tau])
    x_prime = g * y[:, -1]
    drift = np.abs(x + y.sum(axis=1) - 1.0).max()
    if drift > 1e-6:
        raise SolverError(f"mass conservation violated by {drift:g}")
    return OdeSolution(d, q, float(t[1] - t[0]), t, x, x_prime, y=y, tau=tau)


def conjecture_scan(q_max: int, d_max: int, t_max: float | None = None,
                    step: float = MAX_STEP, eps: float = 1e-6) -> VerificationReport:
    """Check that one more list entry never lowers the continuum match rate.

    For every ``q <= q_max`` and ``d <= d_max`` compares ``1 - x**d`` under
    lists of length ``d + 1`` and ``d`` on ``t in [0, q]`` (or
    ``[0, t_max]`` when given). Violations are reported, not raised.
    """
    q_max, d_max = _check_q(q_max), _check_q(d_max)
    violations = []
    worst = math.inf
    for q in range(1, q_max + 1):
        horizon = float(q if t_max is None else t_max)
        probs = [tau_rescaled_solve(d, q, horizon, step).match_prob for d in range(1, d_max + 2)]
        for d in range(1, d_max + 1):
            diff = probs[d] - probs[d - 1]
            low = float(diff.min())
            worst = min(worst, low + eps)
            if low < -eps:
                j = int(diff.argmin())
                violations.append({"q": q, "d": d, "t": j * horizon / (diff.size - 1), "gap": low})
    return VerificationReport(
        claim_id="conjecture-1",
        scope={"q_max": q_max, "d_max": d_max, "t_max": t_max if t_max is not None else "q",
               "step": step, "eps": eps},
        status=Status.PASS if not violations else Status.FAIL,
        margin=worst,
        details={"violations": violations},
    )
