"""Fixed-step RK4 reference for gamma(10), lam = sigma0 = 1, omega0 = 0, eps = 0.

Independent of the adaptive stepper; plain floats. Run as a script to
regenerate the frozen value used in test_gaussian_dynamics.py.
"""


def rk4_gamma(t_end=10.0, dt=1e-5, lam=1.0, sigma0=1.0, omega0=0.0, eps=0.0):
    a = (eps * sigma0) ** 2
    b = 2.0 * lam * sigma0

    def acc(g):
        return a / g**3 + b / g

    g, gd = 1.0, omega0
    n = round(t_end / dt)
    for _ in range(n):
        k1g, k1v = gd, acc(g)
        k2g, k2v = gd + 0.5 * dt * k1v, acc(g + 0.5 * dt * k1g)
        k3g, k3v = gd + 0.5 * dt * k2v, acc(g + 0.5 * dt * k2g)
        k4g, k4v = gd + dt * k3v, acc(g + dt * k3g)
        g += dt / 6 * (k1g + 2 * k2g + 2 * k3g + k4g)
        gd += dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return g, gd


if __name__ == "__main__":
    print(repr(rk4_gamma()))
    print(repr(rk4_gamma(dt=2e-5)))
