#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the frozen reference values under tests/data.

Written without reference to the C++ sources' arithmetic: the generator is
re-implemented from its published definition, and every model quantity is
evaluated in 50-digit arithmetic with derivatives taken numerically by
mpmath rather than by the hand-derived backward pass.
"""
import json
import math
import pathlib

import mpmath as mp

mp.mp.dps = 50
MASK = (1 << 64) - 1
OUT = pathlib.Path(__file__).resolve().parent.parent / "data"


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def derive_seed(seed, tag):
    x = seed ^ ((tag * 0xD1B54A32D192ED03) & MASK)
    x, _ = splitmix64(x)
    _, out = splitmix64(x)
    return out


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


class Xoshiro:
    def __init__(self, seed):
        self.s = []
        x = seed
        for _ in range(4):
            x, v = splitmix64(x)
            self.s.append(v)

    def next(self):
        s = self.s
        result = (rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result

    def uniform(self):
        return (self.next() >> 11) * 2.0**-53

    def below(self, n):
        return (self.next() * n) >> 64

    def gaussian(self, n, mean, sigma):
        out = []
        while len(out) < n:
            u1 = mp.mpf(1) - mp.mpf(self.uniform())
            u2 = mp.mpf(self.uniform())
            r = mp.sqrt(-2 * mp.log(u1))
            th = 2 * mp.pi * u2
            out.append(mean + sigma * r * mp.cos(th))
            if len(out) < n:
                out.append(mean + sigma * r * mp.sin(th))
        return out

    def shuffle(self, n):
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx


def rng_golden():
    cases = []
    for seed in (0, 42, MASK):
        g = Xoshiro(seed)
        raw = [g.next() for _ in range(6)]
        g = Xoshiro(seed)
        uni = [g.uniform() for _ in range(4)]
        g = Xoshiro(seed)
        gauss = g.gaussian(7, 0.5, 2.0)
        g = Xoshiro(seed)
        shuffle = g.shuffle(10)
        cases.append({
            "seed": str(seed),
            "u64": [str(v) for v in raw],
            "uniform": uni,
            "gaussian_mean0.5_sigma2_n7": [float(v) for v in gauss],
            "shuffle10": shuffle,
            "derive_seed_tags_1_2_31": [str(derive_seed(seed, t)) for t in (1, 2, 31)],
        })
    return {"cases": cases}


def split_golden():
    cases = []
    for k in (2, 3, 10, 11):
        for seed in (0, 7, 123):
            order = Xoshiro(derive_seed(seed, 14)).shuffle(k)
            n_base = (k + 1) // 2
            cases.append({"num_classes": k, "seed": seed, "base": sorted(order[:n_base]), "new": sorted(order[n_base:])})
    return {"cases": cases}


def softmax_golden():
    cases = []
    inputs = [
        ([1.0, 2.0, 3.0], 1.0),
        ([0.9, 0.1, -0.3], 0.01),
        ([0.3, -0.7, 0.2, 0.9], 0.01),
        ([1000.0, 1000.0, 999.0], 1.0),
        ([-0.25, 0.5], 0.07),
        ([0.0, 0.0, 0.0, 0.0, 0.0], 0.5),
    ]
    for logits, tau in inputs:
        z = [mp.mpf(v) / mp.mpf(tau) for v in logits]
        m = max(z)
        e = [mp.exp(v - m) for v in z]
        s = mp.fsum(e)
        cases.append({"logits": logits, "tau": tau, "probs": [float(v / s) for v in e]})
    return {"cases": cases}


# Tiny model with hand-picked short decimals so the JSON is exact.
M, M_HAND, TOK, FEAT, K, TAU = 3, 2, 2, 3, 3, 0.07


def tiny_model():
    nin = (M + 1) * TOK
    W = [[round(0.1 * math.sin(1.3 * r + 0.7 * c + 0.2), 6) * 5 for c in range(nin)] for r in range(FEAT)]
    b = [0.05, -0.1, 0.15]
    classes = [[0.9, -0.4], [-0.3, 0.8], [0.5, 0.6]]
    hand = [[0.7, -0.2], [0.1, 0.4]]
    return W, b, classes, hand


def encode(W, b, context, cls):
    flat = [mp.mpf(v) for row in context for v in row] + [mp.mpf(v) for v in cls]
    u = [mp.tanh(mp.fsum(mp.mpf(W[r][c]) * flat[c] for c in range(len(flat))) + b[r]) for r in range(FEAT)]
    n = mp.sqrt(mp.fsum(v * v for v in u))
    return [v / n for v in u]


def cosine(a, x):
    na = mp.sqrt(mp.fsum(v * v for v in a))
    nx = mp.sqrt(mp.fsum(mp.mpf(v) ** 2 for v in x))
    return mp.fsum(a[i] * x[i] for i in range(len(a))) / (na * nx)


def probs(features, x):
    z = [cosine(f, x) / mp.mpf(TAU) for f in features]
    m = max(z)
    e = [mp.exp(v - m) for v in z]
    s = mp.fsum(e)
    return [v / s for v in e]


def vlm_golden():
    W, b, classes, hand = tiny_model()
    zero_prompt = [[0.0] * TOK for _ in range(M - M_HAND)] + hand
    teacher = [encode(W, b, zero_prompt, c) for c in classes]
    prompt = [[0.2, -0.1], [0.3, 0.05], [0.6, -0.35]]
    xs = [[0.6, 0.0, 0.8], [-0.48, 0.64, 0.6], [0.0, -1.0, 0.0], [0.36, 0.48, -0.8]]
    labels = [0, 1, 2, 1]
    cls_w = [[0.3, -0.2, 0.5], [-0.4, 0.6, 0.1], [0.2, 0.2, -0.7]]
    alpha = 0.3

    def feats(flat):
        ctx = [[flat[i * TOK + j] for j in range(TOK)] for i in range(M)]
        return [encode(W, b, ctx, c) for c in classes]

    def ce_of(features):
        return mp.fsum(-mp.log(probs(features, x)[y]) for x, y in zip(xs, labels)) / len(xs)

    def kl_of(features):
        total = mp.mpf(0)
        for x in xs:
            q = probs(teacher, x)
            p = probs(features, x)
            total += mp.fsum(q[i] * mp.log(q[i] / p[i]) for i in range(K))
        return total / len(xs)

    def rows(flat, n, d):
        return [[flat[i * d + j] for j in range(d)] for i in range(n)]

    flat_prompt = [mp.mpf(v) for row in prompt for v in row]
    flat_w = [mp.mpf(v) for row in cls_w for v in row]
    zero_flat = [mp.mpf(v) for row in zero_prompt for v in row]

    def grad(fn, at):
        out = []
        for i in range(len(at)):
            def g(t, i=i):
                v = list(at)
                v[i] = t
                return fn(v)
            out.append(float(mp.diff(g, at[i])))
        return out

    def l2(v):
        return alpha * mp.sqrt(mp.fsum((v[i] - zero_flat[i]) ** 2 for i in range(len(v))))

    return {
        "model": {
            "schema": "frozen_vlm.v1", "context_len": M, "hand_len": M_HAND, "tok_dim": TOK, "feat_dim": FEAT,
            "num_classes": K, "tau": TAU, "seed": 0,
            "enc_weights": [v for row in W for v in row], "enc_bias": b,
            "class_tokens": [v for row in classes for v in row], "hand_prompt": [v for row in hand for v in row],
        },
        "prompt": [v for row in prompt for v in row],
        "features": [v for row in xs for v in row],
        "labels": labels,
        "classifier": [v for row in cls_w for v in row],
        "alpha": alpha,
        "teacher_features": [float(v) for f in teacher for v in f],
        "zero_shot_probs": [[float(v) for v in probs(teacher, x)] for x in xs],
        "prompt_probs": [[float(v) for v in probs(feats(flat_prompt), x)] for x in xs],
        "loss_ce": float(ce_of(feats(flat_prompt))),
        "loss_kl": float(kl_of(feats(flat_prompt))),
        "grad_ce": grad(lambda v: ce_of(feats(v)), flat_prompt),
        "grad_kl": grad(lambda v: kl_of(feats(v)), flat_prompt),
        "grad_l2reg": grad(l2, flat_prompt),
        "classifier_loss_ce": float(ce_of(rows(flat_w, K, FEAT))),
        "classifier_loss_kl": float(kl_of(rows(flat_w, K, FEAT))),
        "classifier_grad_ce": grad(lambda v: ce_of(rows(v, K, FEAT)), flat_w),
        "classifier_grad_kl": grad(lambda v: kl_of(rows(v, K, FEAT)), flat_w),
    }


def losses_golden():
    p = [mp.mpf("0.2"), mp.mpf("0.3"), mp.mpf("0.5")]
    q = [mp.mpf("0.1"), mp.mpf("0.6"), mp.mpf("0.3")]
    q0 = [mp.mpf("0"), mp.mpf("0.25"), mp.mpf("0.75")]
    return {
        "ce_p": [0.2, 0.3, 0.5], "ce_y": 2, "ce": float(-mp.log(p[2])),
        "kl_p": [0.2, 0.3, 0.5], "kl_q": [0.1, 0.6, 0.3],
        "kl": float(mp.fsum(q[i] * mp.log(q[i] / p[i]) for i in range(3))),
        "kl_q_zero": [0.0, 0.25, 0.75],
        "kl_zero": float(mp.fsum(q0[i] * mp.log(q0[i] / p[i]) for i in range(1, 3))),
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, fn in (("rng.json", rng_golden), ("softmax.json", softmax_golden), ("tiny_vlm.json", vlm_golden),
                     ("losses.json", losses_golden), ("split.json", split_golden)):
        (OUT / name).write_text(json.dumps(fn(), indent=1) + "\n")


if __name__ == "__main__":
    main()
