"""Independent reference values computed with mpmath.

Nothing here calls into ``zfsic``; every function evaluates the defining
integral or series in extended precision.
"""
import mpmath as mp

DPS = 30


def marcum_q(m, a, b):
    """Q_m(a, b) as a Poisson mixture of regularized upper gammas (or by quadrature)."""
    with mp.workdps(DPS):
        a, b = mp.mpf(a), mp.mpf(b)
        if b == 0:
            return mp.mpf(1)
        if a == 0:
            return mp.gammainc(m, b * b / 2, mp.inf, regularized=True)
        f = lambda x: x * (x / a) ** (m - 1) * mp.exp(-(x * x + a * a) / 2) * mp.besseli(m - 1, a * x)
        pts = sorted({b, max(a, b), max(a, b) + 10, max(a, b) + 40})
        return mp.quad(f, pts + [mp.inf])


def marcum_q_series(m, a, b):
    """Q_m(a, b) by direct summation of the Poisson series."""
    with mp.workdps(DPS):
        lam = mp.mpf(a) ** 2 / 2
        y = mp.mpf(b) ** 2 / 2
        total = mp.mpf(0)
        k = 0
        term_w = mp.exp(-lam)
        while True:
            term = term_w * mp.gammainc(m + k, y, mp.inf, regularized=True)
            total += term
            if k > lam and term_w < mp.mpf(10) ** (-DPS):
                break
            k += 1
            term_w *= lam / k
        return total


def nuttall_q(mu, nu, a, b):
    """Defining integral of the Nuttall Q function."""
    with mp.workdps(DPS):
        a, b = mp.mpf(a), mp.mpf(b)
        f = lambda x: x ** mu * mp.exp(-(x * x + a * a) / 2) * mp.besseli(nu, a * x)
        peak = (a + mp.sqrt(a * a + 4 * mu)) / 2
        pts = sorted({b, max(b, peak), max(b, peak) + 10, max(b, peak) + 40})
        return mp.quad(f, pts + [mp.inf])


def marcum_integral_j(a, m, b, c=1):
    """int_0^1 u^a Q_m(sqrt(c u), b) du with the Marcum function from its series."""
    with mp.workdps(20):
        f = lambda u: u ** a * marcum_q_series(m, mp.sqrt(c * u), b)
        return mp.quad(f, [0, 0.5, 1])


def gamma_upper(a, x):
    # mpmath loses digits for large negative orders at modest precision.
    with mp.workdps(80):
        return mp.gammainc(a, x, mp.inf)


def gamma_lower(a, x):
    with mp.workdps(DPS):
        return mp.gammainc(a, 0, x)


def hyp1f1(a, b, x):
    with mp.workdps(DPS):
        return mp.hyp1f1(a, b, x)


def besseli(n, x):
    with mp.workdps(DPS):
        return mp.besseli(n, x)
