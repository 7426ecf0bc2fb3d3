"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (elementwise loops, pair counting,
direct formula evaluation) and shares no code with the library paths it
checks.
"""

import numpy as np


def finite_difference(f, tensors, h=1e-5):
    """Central-difference gradient of the scalar ``f()`` wrt each tensor.

    ``f`` must re-run the computation reading the tensors' current data.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rtol=1e-4, small=1e-6, atol=1e-7):
    """Relative comparison above ``small``, absolute below it."""
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        scale = np.maximum(np.abs(a), np.abs(n))
        big = scale >= small
        if big.any():
            rel = np.abs(a - n)[big] / scale[big]
            assert rel.max() < rtol, f"max relative grad error {rel.max():.3e}"
        if (~big).any():
            err = np.abs(a - n)[~big].max()
            assert err < atol, f"max absolute grad error {err:.3e}"


def softmax_ref(scores, mask):
    """Exp-normalize over valid positions, one row at a time."""
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    out = np.zeros_like(scores)
    flat_s = scores.reshape(-1, scores.shape[-1])
    flat_m = np.broadcast_to(mask, scores.shape).reshape(-1, scores.shape[-1])
    flat_o = out.reshape(-1, scores.shape[-1])
    for r in range(flat_s.shape[0]):
        idx = np.where(flat_m[r] > 0)[0]
        e = np.exp(flat_s[r, idx] - flat_s[r, idx].max())
        flat_o[r, idx] = e / e.sum()
    return out


def gru_cell_ref(x, h_prev, wz, uz, bz, wr, ur, br, wh, uh, bh):
    """Scalar-by-scalar GRU cell for a single sample."""

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    hg = len(h_prev)
    z = np.zeros(hg)
    r = np.zeros(hg)
    for j in range(hg):
        z[j] = sig(np.dot(wz[:, j], x) + np.dot(uz[:, j], h_prev) + bz[j])
        r[j] = sig(np.dot(wr[:, j], x) + np.dot(ur[:, j], h_prev) + br[j])
    hh = np.zeros(hg)
    for j in range(hg):
        hh[j] = np.tanh(np.dot(wh[:, j], x) + np.dot(uh[:, j], r * h_prev) + bh[j])
    return (1.0 - z) * h_prev + z * hh


def auc_pair_count(pos_scores, neg_scores):
    """Concordant-pair AUC with ties counted 1/2."""
    wins = 0.0
    for p in pos_scores:
        for n in neg_scores:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos_scores) * len(neg_scores))


def macro_scores_ref(cm):
    """Direct evaluation of accuracy and macro P/R/F1 from a confusion grid."""
    cm = np.asarray(cm, dtype=np.float64)
    c = cm.shape[0]
    acc = np.trace(cm) / cm.sum()
    ps, rs, fs = [], [], []
    for i in range(c):
        tp = cm[i, i]
        fp = cm[:, i].sum() - tp
        fn = cm[i, :].sum() - tp
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(f)
    return acc, np.mean(ps), np.mean(rs), np.mean(fs)


def cohen_kappa_ref(a, b):
    a = list(a)
    b = list(b)
    n = len(a)
    labels = sorted(set(a) | set(b))
    po = sum(1 for x, y in zip(a, b) if x == y) / n
    pe = 0.0
    for lab in labels:
        pe += (a.count(lab) / n) * (b.count(lab) / n)
    return (po - pe) / (1.0 - pe)
