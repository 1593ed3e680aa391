"""Published sub-optimal SOPTD reductions of the 38 test-bench processes.

Each row: (class, parameter, J_min, K, tau_max, tau_min, L).
"""

from __future__ import annotations

from dataclasses import dataclass

from .lti import ReducedModel, TestbenchSpec

_ROWS = [
    ("P1", 3, 0.35763, 1.0, 1.335035, 1.296596, 0.458524),
    ("P1", 4, 0.534457, 1.0, 1.586542, 1.548473, 1.03317),
    ("P1", 5, 0.643986, 1.0, 1.797635, 1.770904, 1.666146),
    ("P1", 6, 0.720594, 1.0, 1.989875, 1.959647, 2.344943),
    ("P1", 7, 0.779376, 1.0, 2.163055, 2.14323, 3.051016),
    ("P1", 8, 0.82832, 1.0, 2.310304, 2.310215, 3.782639),
    ("P1", 10, 0.91604, 1.0, 2.661457, 2.549809, 5.293009),
    ("P1", 20, 2.504335, 1.0, 5.451683, 5.397813, 9.999728),
    ("P2", 0.1, 0.004308, 1.0, 0.999772, 0.100915, 0.010279),
    ("P2", 0.2, 0.028107, 1.0, 0.992451, 0.214076, 0.038794),
    ("P2", 0.3, 0.060572, 1.0, 0.979505, 0.341498, 0.092874),
    ("P2", 0.4, 0.107937, 1.0, 0.943464, 0.51063, 0.167586),
    ("P2", 0.5, 0.173435, 1.0, 0.833884, 0.778235, 0.270018),
    ("P2", 0.6, 0.292888, 1.0, 0.919789, 0.886179, 0.409777),
    ("P2", 0.7, 0.400586, 1.0, 1.026115, 1.021073, 0.559864),
    ("P2", 0.8, 0.480812, 1.0, 1.233382, 1.10547, 0.720248),
    ("P2", 0.9, 0.521566, 1.0, 1.371358, 1.331686, 0.879882),
    ("P3", 0.005, 0.003451, 1.0, 1.000027, 0.007301, 0.00276),
    ("P3", 0.01, 0.006693, 1.0, 0.999721, 0.014931, 0.005228),
    ("P3", 0.02, 0.013254, 1.0, 0.999557, 0.030272, 0.010203),
    ("P3", 0.05, 0.031173, 1.0, 0.997605, 0.075538, 0.026398),
    ("P3", 0.1, 0.05823, 1.0, 0.989257, 0.157307, 0.050227),
    ("P3", 0.2, 0.100513, 1.0, 0.963887, 0.337572, 0.09348),
    ("P3", 0.5, 0.243507, 1.0, 0.911085, 0.868222, 0.253221),
    ("P3", 2, 0.274858, 1.0, 2.285902, 2.162089, 0.662506),
    ("P3", 5, 0.105979, 1.0, 5.271248, 4.954549, 0.85439),
    ("P3", 10, 0.048469, 1.0, 9.999702, 9.998882, 0.98878),
    ("P4", 0.1, 0.350007, 1.0, 1.321307, 1.304839, 0.562264),
    ("P4", 0.2, 0.334032, 1.0, 1.317905, 1.293675, 0.66746),
    ("P4", 0.3, 0.332085, 1.0, 1.393695, 1.197571, 0.773718),
    ("P4", 0.4, 0.351824, 1.0, 1.334063, 1.234247, 0.873208),
    ("P4", 0.5, 0.423653, 1.0, 1.298311, 1.242496, 0.968798),
    ("P4", 0.6, 0.542731, 1.0, 1.25362, 1.252805, 1.064005),
    ("P4", 0.7, 0.698068, 1.0, 1.241163, 1.240979, 1.150465),
    ("P4", 0.8, 0.881815, 1.0, 1.293128, 1.161037, 1.234179),
    ("P4", 0.9, 1.085803, 1.0, 1.28306, 1.138877, 1.308246),
    ("P4", 1.0, 1.307159, 1.0, 1.298524, 1.09749, 1.387555),
    ("P4", 1.1, 1.542905, 1.0, 1.312971, 1.053957, 1.459166),
]


@dataclass(frozen=True)
class TableRow:
    spec: TestbenchSpec
    J_min: float
    model: ReducedModel


TABLE_I = [
    TableRow(TestbenchSpec(c, p), j, ReducedModel.soptd(k, tmax, tmin, L))
    for c, p, j, k, tmax, tmin, L in _ROWS
]


def lookup(spec: TestbenchSpec) -> TableRow:
    for row in TABLE_I:
        if row.spec == spec:
            return row
    raise KeyError(f"{spec.label} is not a published test-bench process")
