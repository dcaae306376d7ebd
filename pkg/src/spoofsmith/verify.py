"""Built-in verification suite: gradient checks against central finite
differences, oracle-equivalence checks for every layer with an independent
reference, and persistence round trips.

Each check returns (name, passed, detail); `run_verification` executes
them all. The CLI `verify` command prints one line per check.
"""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import data as D
from . import layers as L
from . import metrics as M
from . import models
from . import rng as _rng
from . import tensor as T
from .gradcheck import finite_difference_grad, grad_error
from .tensor import Tensor
from .train import AdamState, adam_step


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


# -- gradient checks ------------------------------------------------------

def _fd_check(build_loss, x0: np.ndarray, tol: float = 1e-4) -> float:
    """build_loss(Tensor) -> scalar Tensor; returns the fd error for x0."""
    x = Tensor(x0.astype(np.float64), requires_grad=True, name="x")
    loss = build_loss(x)
    T.backward(loss)

    def f(arr):
        with T.no_grad():
            return build_loss(Tensor(arr.astype(np.float64))).item()

    return grad_error(x.grad, finite_difference_grad(f, x0))


def _rand(gen, shape):
    return gen.uniform(-1.0, 1.0, size=shape)


def gradient_checks(cases_per_op: int = 25, seed: int = 99) -> list:
    """Finite-difference checks for every differentiable op, f64."""
    results = []
    gen = _rng.stream(seed, "gradcheck")

    def run(name, make_case):
        worst = 0.0
        for _ in range(cases_per_op):
            build_loss, x0 = make_case(gen)
            worst = max(worst, _fd_check(build_loss, x0))
        results.append(CheckResult(f"grad/{name}", worst < 1e-4,
                                   f"max err {worst:.2e}"))

    def elementwise_case(op):
        def make(gen):
            x0 = _rand(gen, (3, 4))
            other = Tensor(_rand(gen, (3, 4)).astype(np.float64))
            if op == "add":
                return lambda x: T.tsum(T.mul(T.add(x, other), other)), x0
            if op == "sub":
                return lambda x: T.tsum(T.mul(T.sub(x, other), other)), x0
            if op == "mul":
                return lambda x: T.tsum(T.mul(x, other)), x0
            if op == "relu":
                return lambda x: T.tsum(T.relu(x)), x0 + np.sign(x0) * 0.01
            if op == "leaky_relu":
                return (lambda x: T.tsum(T.leaky_relu(x, 0.2)),
                        x0 + np.sign(x0) * 0.01)
            if op == "tanh":
                return lambda x: T.tsum(T.tanh(x)), x0
            if op == "sigmoid":
                return lambda x: T.tsum(T.sigmoid(x)), x0
            raise AssertionError(op)
        return make

    for op in ("add", "sub", "mul", "relu", "leaky_relu", "tanh", "sigmoid"):
        run(op, elementwise_case(op))

    def matmul_case(gen):
        b = Tensor(_rand(gen, (4, 3)).astype(np.float64))
        return lambda x: T.tsum(T.tanh(T.matmul(x, b))), _rand(gen, (2, 4))
    run("matmul", matmul_case)

    def dense_case(gen):
        w = Tensor(_rand(gen, (5, 3)).astype(np.float64))
        bias = Tensor(_rand(gen, (3,)).astype(np.float64))
        return lambda x: T.tsum(T.sigmoid(L.dense(x, w, bias))), _rand(gen, (2, 5))
    run("dense", dense_case)

    def conv2d_case(gen):
        w = Tensor(_rand(gen, (2, 3, 3, 3)).astype(np.float64))
        bias = Tensor(_rand(gen, (2,)).astype(np.float64))
        params = L.Conv2dParams(w, bias, stride=2, padding=1)
        return (lambda x: T.tsum(T.tanh(L.conv2d(x, params))),
                _rand(gen, (2, 3, 6, 6)))
    run("conv2d", conv2d_case)

    def convt_case(gen):
        w = Tensor(_rand(gen, (3, 2, 4, 4)).astype(np.float64))
        bias = Tensor(_rand(gen, (2,)).astype(np.float64))
        return (lambda x: T.tsum(T.tanh(L.conv_transpose2d(x, w, bias, 2, 1))),
                _rand(gen, (1, 3, 4, 4)))
    run("conv_transpose2d", convt_case)

    def maxpool_case(gen):
        # Distinct window entries so the argmax is stable under the probe h.
        x0 = _rand(gen, (1, 2, 4, 4))
        x0 += np.arange(x0.size).reshape(x0.shape) * 1e-3
        return lambda x: T.tsum(T.tanh(L.maxpool2d(x))), x0
    run("maxpool2d", maxpool_case)

    def batchnorm_case(gen):
        ch = 3
        gamma = Tensor(_rand(gen, (ch,)).astype(np.float64) + 1.5)
        beta = Tensor(_rand(gen, (ch,)).astype(np.float64))

        def build(x):
            state = L.BatchNormState(gamma, beta,
                                     Tensor(np.zeros(ch, dtype=np.float64)),
                                     Tensor(np.ones(ch, dtype=np.float64)))
            return T.tsum(T.tanh(L.batchnorm2d(x, state, "train")))
        return build, _rand(gen, (2, ch, 3, 3))
    run("batchnorm2d", batchnorm_case)

    def bce_case(gen):
        t = (gen.random((3, 2)) > 0.5).astype(np.float64)
        x0 = gen.uniform(0.05, 0.95, size=(3, 2))
        return lambda x: L.bce_loss(x, t), x0
    run("bce_loss", bce_case)

    def composite_case(gen):
        # Conv/pool/dense/sigmoid/bce stack on a 3x16x16 input.
        net = _mini_classifier(seed=int(gen.integers(1 << 31)))
        for p in net.params.values():
            p.data = p.data.astype(np.float64)
        t = np.ones((1, 1), dtype=np.float64)
        return (lambda x: L.bce_loss(models.forward(net, x, "eval"), t),
                _rand(gen, (1, 3, 16, 16)))
    run("classifier_composite", composite_case)

    return results


def _mini_classifier(seed: int = 0) -> models.NetworkSpec:
    """Small conv/pool/dense/sigmoid stack on 3x16x16 for composite checks."""
    b = models._Builder("m.", seed)
    b.conv2d("conv1", 3, 4, k=3, stride=1, pad=1)
    b.simple("relu")
    b.simple("maxpool2d")
    b.conv2d("conv2", 4, 6, k=3, stride=1, pad=1)
    b.simple("relu")
    b.simple("maxpool2d")
    b.simple("flatten")
    b.dense("fc1", 6 * 4 * 4, 8)
    b.simple("relu")
    b.dense("fc2", 8, 1)
    b.simple("sigmoid")
    return b.build((3, 16, 16))


# -- oracle equivalence ---------------------------------------------------

def conv2d_reference(x, w, b, stride, pad):
    """Direct six-loop cross-correlation; the conv2d oracle."""
    n, c, h, w_in = x.shape
    oc, ic, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w_in + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    y = np.zeros((n, oc, oh, ow), dtype=x.dtype)
    for ni in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    # Sequential f64 accumulation over (c, u, v).
                    acc = 0.0
                    for ci in range(ic):
                        for u in range(kh):
                            for v in range(kw):
                                acc += float(w[o, ci, u, v]) * float(
                                    xp[ni, ci, i * stride + u, j * stride + v])
                    y[ni, o, i, j] = acc + float(b[o])
    return y


def check_conv_oracle(seed: int = 5) -> CheckResult:
    gen = _rng.stream(seed, "conv-oracle")
    worst = 0.0
    for _ in range(5):
        x = gen.standard_normal((2, 3, 8, 8)).astype(np.float32)
        w = gen.standard_normal((4, 3, 3, 3)).astype(np.float32)
        b = gen.standard_normal(4).astype(np.float32)
        got = L.conv2d(Tensor(x), L.Conv2dParams(Tensor(w), Tensor(b), 2, 1)).data
        ref = conv2d_reference(x, w, b, 2, 1)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return CheckResult("oracle/conv2d_vs_loops", worst == 0.0,
                       f"max abs diff {worst:.2e} (exact match required)")


def check_convt_adjoint(seed: int = 6, draws: int = 20) -> CheckResult:
    """forward(conv_transpose2d) must equal the autodiff input-gradient of
    the conv2d sharing its weight."""
    gen = _rng.stream(seed, "convt-adjoint")
    worst = 0.0
    for _ in range(draws):
        c, oc = int(gen.integers(1, 4)), int(gen.integers(1, 4))
        h = int(gen.integers(2, 6))
        w = gen.standard_normal((c, oc, 4, 4)).astype(np.float32)
        v = gen.standard_normal((1, c, h, h)).astype(np.float32)
        bias = np.zeros(oc, dtype=np.float32)
        fwd = L.conv_transpose2d(Tensor(v), Tensor(w), Tensor(bias), 2, 1).data

        # conv2d with weight axes (c -> out_ch, oc -> in_ch); its input
        # gradient seeded with v must reproduce the forward above.
        big = Tensor(np.zeros((1, oc, fwd.shape[2], fwd.shape[3]),
                              dtype=np.float32), requires_grad=True, name="img")
        y = L.conv2d(big, L.Conv2dParams(Tensor(w), Tensor(np.zeros(c, np.float32)),
                                         2, 1))
        T.backward(T.tsum(T.mul(y, Tensor(v))))
        worst = max(worst, float(np.max(np.abs(fwd - big.grad))))
    return CheckResult("oracle/conv_transpose_vs_adjoint", worst < 1e-5,
                       f"max abs diff {worst:.2e}")


def check_batchnorm_two_pass(seed: int = 7) -> CheckResult:
    gen = _rng.stream(seed, "bn-oracle")
    worst = 0.0
    for _ in range(5):
        x = gen.standard_normal((4, 3, 5, 5)).astype(np.float64)
        gamma = gen.standard_normal(3) + 1.0
        beta = gen.standard_normal(3)
        state = L.BatchNormState(Tensor(gamma), Tensor(beta),
                                 Tensor(np.zeros(3)), Tensor(np.ones(3)))
        got = L.batchnorm2d(Tensor(x), state, "train").data
        # Explicit two-pass mean/variance reference.
        ref = np.empty_like(x)
        for ch in range(3):
            vals = x[:, ch]
            mu = vals.sum() / vals.size
            var = ((vals - mu) ** 2).sum() / vals.size
            ref[:, ch] = gamma[ch] * (vals - mu) / np.sqrt(var + 1e-5) + beta[ch]
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return CheckResult("oracle/batchnorm_vs_two_pass", worst < 1e-6,
                       f"max abs diff {worst:.2e}")


def mann_whitney_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """O(n^2) pairwise statistic: P(score_pos > score_neg) + 0.5 ties."""
    pos = scores[positive]
    neg = scores[~positive]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def check_auc_mann_whitney(seed: int = 8, sets: int = 100) -> CheckResult:
    gen = _rng.stream(seed, "auc-oracle")
    worst = 0.0
    for _ in range(sets):
        n = int(gen.integers(4, 65))
        scores = np.round(gen.random(n), 2)  # rounded to force ties
        positive = gen.random(n) > 0.5
        if positive.all() or not positive.any():
            positive[0] = ~positive[0]
        sset = M.ScoredSet(scores, positive)
        got = M.auc(M.roc_curve(sset))
        ref = mann_whitney_auc(sset.scores, sset.positive)
        worst = max(worst, abs(got - ref))
    return CheckResult("oracle/auc_vs_mann_whitney", worst < 1e-9,
                       f"max abs diff {worst:.2e}")


def scalar_adam_reference(g_fn, p0: float, steps: int, lr: float,
                          beta1: float, beta2: float, eps: float = 1e-8):
    """Standalone scalar Adam, written independently of train.adam_step."""
    p, m, v = p0, 0.0, 0.0
    trajectory = []
    for t in range(1, steps + 1):
        g = g_fn(p)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p = p - lr * m_hat / (v_hat ** 0.5 + eps)
        trajectory.append(p)
    return trajectory


def check_adam_trajectory() -> CheckResult:
    """10 Adam steps minimizing p^2, f64, against the scalar reference."""
    lr, b1, b2 = 0.1, 0.9, 0.999
    ref = scalar_adam_reference(lambda p: 2.0 * p, 1.0, 10, lr, b1, b2)

    params = {"p": Tensor(np.array(1.0, dtype=np.float64), requires_grad=True,
                          name="p")}
    state = AdamState.for_params(params)
    worst = 0.0
    for t in range(10):
        adam_step(params, {"p": np.array(2.0 * params["p"].data)}, state,
                  lr, b1, b2)
        worst = max(worst, abs(float(params["p"].data) - ref[t]))
    return CheckResult("oracle/adam_vs_scalar_reference", worst < 1e-10,
                       f"max abs diff {worst:.2e}")


# -- persistence round trips ----------------------------------------------

def check_blob_roundtrip(seed: int = 9) -> CheckResult:
    gen = _rng.stream(seed, "blob")
    ok = True
    for dtype in (np.float32, np.float64):
        for rank in range(1, 5):
            shape = tuple(int(gen.integers(1, 5)) for _ in range(rank))
            arr = gen.standard_normal(shape).astype(dtype)
            buf = io.BytesIO()
            D.write_tensor_blob(buf, arr)
            buf.seek(0)
            back = D.read_tensor_blob(buf)
            ok &= back.dtype == arr.dtype and back.shape == arr.shape \
                and bool(np.array_equal(
                    back.view(np.uint8), arr.view(np.uint8)))
    return CheckResult("roundtrip/tensor_blob", ok, "f32/f64 ranks 1..4")


def check_checkpoint_roundtrip() -> CheckResult:
    net = _mini_classifier(seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        p1 = os.path.join(tmp, "a.ckpt")
        p2 = os.path.join(tmp, "b.ckpt")
        D.save_checkpoint(p1, net, meta={"seed": 1, "iteration": 0})
        ck = D.load_checkpoint(p1)
        D.save_checkpoint(p2, ck.network, meta=ck.meta, adam=ck.adam)
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            ok = f1.read() == f2.read()
        for name, t in net.params.items():
            ok &= bool(np.array_equal(t.data, ck.network.params[name].data))
    return CheckResult("roundtrip/checkpoint", ok, "save-load-save byte identical")


def check_png_endpoints() -> CheckResult:
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "x.png")
        D.encode_image(np.full((3, 4, 4), -1.0, dtype=np.float32), path)
        black = D.decode_image(path, (3, 4, 4)).data
        D.encode_image(np.full((3, 4, 4), 1.0, dtype=np.float32), path)
        white = D.decode_image(path, (3, 4, 4)).data
        ok = bool(np.all(black == -1.0) and np.all(white == 1.0))
    return CheckResult("roundtrip/png_endpoints", ok, "0 <-> -1.0, 255 <-> +1.0")


# -- suite ----------------------------------------------------------------

def run_verification(cases_per_op: int = 10) -> list:
    results = list(gradient_checks(cases_per_op=cases_per_op))
    results += [
        check_conv_oracle(),
        check_convt_adjoint(),
        check_batchnorm_two_pass(),
        check_auc_mann_whitney(),
        check_adam_trajectory(),
        check_blob_roundtrip(),
        check_checkpoint_roundtrip(),
        check_png_endpoints(),
    ]
    return results
