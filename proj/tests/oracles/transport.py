"""Exact transport costs by linear programming (scipy HiGHS) for fixed small instances."""
import numpy as np
from scipy.optimize import linprog


def w1(cost, a, b):
    n, m = cost.shape
    aeq = np.zeros((n + m, n * m))
    for i in range(n):
        aeq[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        aeq[n + j, j::m] = 1
    res = linprog(cost.ravel(), A_eq=aeq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


if __name__ == "__main__":
    rng = np.random.default_rng(20240601)
    cost = np.round(rng.uniform(0, 5, size=(4, 5)), 3)
    a = np.array([0.1, 0.4, 0.3, 0.2])
    b = np.array([0.25, 0.05, 0.3, 0.15, 0.25])
    print("cost", cost.tolist())
    print("w1", repr(w1(cost, a, b)))
    c2 = np.array([[0.0, 1.5], [1.5, 0.0]])
    print("half", repr(w1(c2, np.array([0.5, 0.5]), np.array([1.0, 0.0]))))
