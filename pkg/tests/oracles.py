"""Independent reference implementations used to check the engine.

Everything here is deliberately scalar and dumb: forward-mode
sensitivity propagation for gradients (the engine uses reverse mode),
plain-python interval statistics, and a hand-written linear-interpolation
percentile.  Shared by the unit tests and the acceptance suite.
"""

import math


def _softmax(logits):
    m = max(logits)
    exps = [math.exp(z - m) for z in logits]
    total = sum(exps)
    return [e / total for e in exps]


def _surrogate(x, alpha):
    y = 0.5 * math.pi * alpha * x
    return alpha / (2.0 * (1.0 + y * y))


def oracle_loss_and_grads(x, targets, w1, b1, w2, b2, tau, theta, alpha):
    """Mean-CE loss and all parameter gradients by forward-mode sweeps.

    x: nested lists (N, T, D) of input currents; targets: N ints.
    w1 (H, D), b1 (H,), w2 (C, H), b2 (C,) as nested lists.  For every
    scalar parameter, the derivative of membrane and (surrogate) spike
    state is propagated forward through the recursion, one sweep per
    parameter, per sample.  O(P * N * T * H * D) and proud of it.
    """
    n_samples = len(x)
    timesteps = len(x[0])
    dim = len(x[0][0])
    hidden = len(w1)
    classes = len(w2)
    beta = 1.0 - 1.0 / tau

    params = []
    for i in range(hidden):
        for d in range(dim):
            params.append(("w1", i, d))
        params.append(("b1", i))
    for c in range(classes):
        for i in range(hidden):
            params.append(("w2", c, i))
        params.append(("b2", c))

    grads = {
        "w1": [[0.0] * dim for _ in range(hidden)],
        "b1": [0.0] * hidden,
        "w2": [[0.0] * hidden for _ in range(classes)],
        "b2": [0.0] * classes,
    }
    total_loss = 0.0

    for n in range(n_samples):
        # plain forward once, for the loss and the softmax
        u_prev = [0.0] * hidden
        s_prev = [0.0] * hidden
        sbar = [0.0] * hidden
        u_hist = [[0.0] * hidden for _ in range(timesteps)]
        s_hist = [[0.0] * hidden for _ in range(timesteps)]
        for t in range(timesteps):
            for i in range(hidden):
                cur = b1[i]
                for d in range(dim):
                    cur += w1[i][d] * x[n][t][d]
                u_t = beta * u_prev[i] + cur - theta * s_prev[i]
                s_t = 1.0 if u_t >= theta else 0.0
                u_hist[t][i] = u_t
                s_hist[t][i] = s_t
                sbar[i] += s_t / timesteps
            u_prev = u_hist[t][:]
            s_prev = s_hist[t][:]
        logits = [
            b2[c] + sum(w2[c][i] * sbar[i] for i in range(hidden))
            for c in range(classes)
        ]
        probs = _softmax(logits)
        total_loss -= math.log(probs[targets[n]])
        dl_dlogits = [
            (probs[c] - (1.0 if c == targets[n] else 0.0)) / n_samples
            for c in range(classes)
        ]

        for param in params:
            kind = param[0]
            udot_prev = [0.0] * hidden
            sdot_prev = [0.0] * hidden
            sbardot = [0.0] * hidden
            for t in range(timesteps):
                udot = [0.0] * hidden
                sdot = [0.0] * hidden
                for i in range(hidden):
                    if kind == "w1" and param[1] == i:
                        curdot = x[n][t][param[2]]
                    elif kind == "b1" and param[1] == i:
                        curdot = 1.0
                    else:
                        curdot = 0.0
                    udot[i] = (beta * udot_prev[i] + curdot
                               - theta * sdot_prev[i])
                    sdot[i] = _surrogate(u_hist[t][i] - theta, alpha) * udot[i]
                    sbardot[i] += sdot[i] / timesteps
                udot_prev = udot
                sdot_prev = sdot
            logitsdot = [0.0] * classes
            for c in range(classes):
                acc = sum(w2[c][i] * sbardot[i] for i in range(hidden))
                if kind == "w2" and param[1] == c:
                    acc += sbar[param[2]]
                elif kind == "b2" and param[1] == c:
                    acc += 1.0
                logitsdot[c] = acc
            dl_dp = sum(dl_dlogits[c] * logitsdot[c] for c in range(classes))
            if kind == "w1":
                grads["w1"][param[1]][param[2]] += dl_dp
            elif kind == "b1":
                grads["b1"][param[1]] += dl_dp
            elif kind == "w2":
                grads["w2"][param[1]][param[2]] += dl_dp
            else:
                grads["b2"][param[1]] += dl_dp

    return total_loss / n_samples, grads


def percentile_linear(values, pct):
    """Linear-interpolation percentile (the classic (n-1)*p/100 rule)."""
    srt = sorted(values)
    h = (len(srt) - 1) * pct / 100.0
    lo = math.floor(h)
    hi = math.ceil(h)
    return srt[lo] + (srt[hi] - srt[lo]) * (h - lo)


def oracle_isi_importance(raster, epsilon=1e-3, clip_percentile=95.0,
                          silent_cv=2.0):
    """Direct-from-definition interval-regularity importance.

    raster: nested (N, T, H) of 0/1 ints.  Returns (omega, raw, cv)
    lists.  Intervals are within-sample spike-time differences pooled
    across samples; CV uses the population standard deviation; neurons
    with an empty pooled interval list get the sentinel CV.
    """
    n_samples = len(raster)
    timesteps = len(raster[0]) if n_samples else 0
    hidden = len(raster[0][0]) if timesteps else 0
    cvs = []
    for i in range(hidden):
        pooled = []
        for n in range(n_samples):
            times = [t for t in range(timesteps) if raster[n][t][i]]
            pooled.extend(b - a for a, b in zip(times, times[1:]))
        if not pooled:
            cvs.append(silent_cv)
            continue
        mu = sum(pooled) / len(pooled)
        var = sum((v - mu) ** 2 for v in pooled) / len(pooled)
        cvs.append(math.sqrt(var) / (mu + epsilon))
    raw = [1.0 / (cv + epsilon) for cv in cvs]
    cutoff = percentile_linear(raw, clip_percentile)
    omega = [min(r, cutoff) / (cutoff + epsilon) for r in raw]
    return omega, raw, cvs


def replay_membrane(currents, tau, theta):
    """Step-by-step scalar replay of the membrane recursion.

    currents: nested (T,) floats for one neuron.  Returns (u, s) lists.
    Uses the exact same expression shape as the engine so results must
    be bit-identical, not merely close.
    """
    beta = 1.0 - 1.0 / tau
    u_prev = 0.0
    s_prev = 0.0
    u_out, s_out = [], []
    for cur in currents:
        u_t = beta * u_prev + cur - theta * s_prev
        s_t = 1.0 if u_t >= theta else 0.0
        u_out.append(u_t)
        s_out.append(s_t)
        u_prev = u_t
        s_prev = s_t
    return u_out, s_out
