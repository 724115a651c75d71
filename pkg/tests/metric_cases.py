"""Hand-computed confusion-matrix cases and a Welch reference table.

Each case lists golds/preds as S/N strings with the confusion counts,
accuracy and Macro-F1 worked out by hand (fractions kept exact).
"""

from fractions import Fraction as F

import mpmath as mp

CONFUSION_CASES = [
    # golds, preds, (tp, fp, fn, tn), accuracy, macro-F1
    ("SSNN", "SNSN", (1, 1, 1, 1), F(1, 2), F(1, 2)),
    ("SSSN", "SSNN", (2, 0, 1, 1), F(3, 4), F(11, 15)),  # F1_S = 4/5, F1_N = 2/3
    ("SNSN", "SNSN", (2, 0, 0, 2), F(1), F(1)),
    ("SN", "NS", (0, 1, 1, 0), F(0), F(0)),
    ("SSSS", "SSSS", (4, 0, 0, 0), F(1), F(1, 2)),  # N absent everywhere: F1_N = 0
    ("SSNN", "SSSS", (2, 2, 0, 0), F(1, 2), F(1, 3)),
    ("SNNNN", "NNNNN", (0, 0, 1, 4), F(4, 5), F(4, 9)),
    ("SSSNNNNN", "SNNSSNNN", (1, 2, 2, 3), F(1, 2), F(7, 15)),
    ("SSSSN", "SSSNS", (3, 1, 1, 0), F(3, 5), F(3, 8)),
    ("NNSSSS", "NSSSSN", (3, 1, 1, 1), F(2, 3), F(5, 8)),
]

# Two-sided Welch p-values, 40-digit mpmath via the regularized incomplete beta.
WELCH_TABLE = [
    ([0.70, 0.71, 0.72, 0.69, 0.70], [0.50, 0.51, 0.49, 0.50, 0.52], 3.0818679074397054e-09),
    ([1, 2, 3, 4, 5], [2, 4, 6, 8, 10], 0.10753119493062724),
    ([0.61, 0.64, 0.60, 0.66, 0.63], [0.60, 0.62, 0.61, 0.59, 0.63], 0.20299022487190778),
    ([10.1, 9.8, 10.4, 10.0], [9.0, 11.5, 8.7, 12.1, 10.3, 9.9], 0.76776226077843891),
    ([0.5, 0.52], [0.49, 0.55, 0.47], 0.81680864146501654),
]


def welch_mp(a, b, dps=40):
    with mp.workdps(dps):
        a = [mp.mpf(str(x)) for x in a]
        b = [mp.mpf(str(x)) for x in b]
        ma, mb = sum(a) / len(a), sum(b) / len(b)
        sa = sum((x - ma) ** 2 for x in a) / (len(a) - 1) / len(a)
        sb = sum((x - mb) ** 2 for x in b) / (len(b) - 1) / len(b)
        t = (ma - mb) / mp.sqrt(sa + sb)
        df = (sa + sb) ** 2 / (sa ** 2 / (len(a) - 1) + sb ** 2 / (len(b) - 1))
        p = mp.betainc(df / 2, mp.mpf(1) / 2, 0, df / (df + t ** 2), regularized=True)
        return float(t), float(df), float(p)
