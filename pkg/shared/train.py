"""
학습: φ 에 대한 무제약 1차 최적화 (Adam), 스펙트럼 정규화 / 무제약 기준선, ℓ2 PGD 공격
"""

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from shared import autodiff as ad
from shared import linalg, statespace
from shared.arch import LayerPlan, parse_arch, plan
from shared.data import Dataset, batches
from shared.errors import DivergedLoss, InvalidConfig
from shared.layers import DEFAULT_EPS, LipNetwork
from shared.nn import Activation, ConvLayer, FcLayer, Flatten, PlainNetwork, PoolLayer, forward, forward_var

METRICS_HEADER = ["epoch", "split", "loss", "accuracy"]

Log = Callable[[str], None]


# ─── 설정 ───────────────────────────────────────────────────

class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    arch: str
    rho: float = 1.0
    optimizer: Literal["adam"] = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 1
    batch_size: int = 64
    seed: int = 0
    eps_gramian: float = DEFAULT_EPS
    loss: Literal["ce", "mse"] = "ce"
    activation: Literal["relu", "tanh"] = "relu"
    padding: Literal["same", "causal"] = "same"

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if not self.rho > 0:
            raise InvalidConfig(f"rho는 0보다 커야 합니다 (받음: {self.rho})")
        if self.lr < 0:
            raise InvalidConfig(f"학습률은 0 이상이어야 합니다 (받음: {self.lr})")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidConfig(f"epochs ≥ 0, batch_size ≥ 1 이어야 합니다 ({self.epochs}, {self.batch_size})")
        if not self.eps_gramian > 0:
            raise InvalidConfig(f"eps_gramian은 0보다 커야 합니다 (받음: {self.eps_gramian})")
        return self


def make_config(**kwargs) -> TrainConfig:
    """
    Raises:
        InvalidConfig: 타입 / 범위 검증 실패
    """
    try:
        return TrainConfig(**kwargs)
    except ValidationError as e:
        err = e.errors()[0]
        raise InvalidConfig(f"학습 설정 오류: {err['loc']} {err['msg']}") from e


# ─── 옵티마이저 ─────────────────────────────────────────────

class Adam:
    def __init__(self, lr: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """params 를 제자리 갱신"""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.beta1 * self.m.get(name, 0.0) + (1.0 - self.beta1) * g
            v = self.beta2 * self.v.get(name, 0.0) + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] = params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ─── 지표 ───────────────────────────────────────────────────

@dataclass(frozen=True)
class MetricRow:
    epoch: int
    split: str
    loss: float
    accuracy: float

    def row(self) -> List[str]:
        return [str(self.epoch), self.split, f"{self.loss:.10g}", f"{self.accuracy:.10g}"]


def write_metrics_csv(path: Union[str, Path], rows: Iterable[MetricRow]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        for r in rows:
            writer.writerow(r.row())


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def _loss_var(kind: str, out: ad.Var, targets: np.ndarray) -> ad.Var:
    return ad.cross_entropy(out, targets) if kind == "ce" else ad.mse(out, targets)


def _loss_np(kind: str, out: np.ndarray, targets: np.ndarray) -> float:
    if kind == "ce":
        logp = ad.log_softmax_np(out)
        return float(-np.mean(logp[np.arange(len(targets)), np.asarray(targets, dtype=np.int64)]))
    return float(np.mean((out - np.asarray(targets).reshape(out.shape)) ** 2))


def _split_metrics(kind: str, epoch: int, split: str, out: np.ndarray, targets: np.ndarray) -> MetricRow:
    acc = accuracy(out, targets) if kind == "ce" else float("nan")
    return MetricRow(epoch, split, _loss_np(kind, out, targets), acc)


def predict_batched(fn: Callable[[np.ndarray], np.ndarray], inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    return np.concatenate([fn(inputs[i:i + batch_size]) for i in range(0, len(inputs), batch_size)])


# ─── 공통 학습 루프 ──────────────────────────────────────────

StepFn = Callable[[Dict[str, np.ndarray], np.ndarray, np.ndarray], Tuple[float, Dict[str, np.ndarray], np.ndarray]]


def _fit(
    params: Dict[str, np.ndarray],
    step_fn: StepFn,
    predict_fn: Callable[[np.ndarray], np.ndarray],
    config: TrainConfig,
    dataset: Dataset,
    eval_set: Optional[Dataset],
    after_step: Optional[Callable[[Dict[str, np.ndarray]], None]],
    log: Log,
) -> List[MetricRow]:
    opt = Adam(config.lr, (config.beta1, config.beta2), config.adam_eps)
    metrics: List[MetricRow] = []

    for epoch in range(1, config.epochs + 1):
        total, correct, count = 0.0, 0, 0
        for xb, yb in batches(dataset, config.batch_size, seed=config.seed + epoch):
            loss, grads, out = step_fn(params, xb, yb)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergedLoss(f"epoch {epoch}: loss {loss} (발산)")
            opt.step(params, grads)
            if after_step is not None:
                after_step(params)
            total += loss * len(xb)
            count += len(xb)
            if config.loss == "ce":
                correct += int(np.sum(np.argmax(out, axis=1) == yb))

        acc = correct / count if config.loss == "ce" and count else float("nan")
        metrics.append(MetricRow(epoch, "train", total / max(count, 1), acc))
        line = f"  [epoch {epoch}/{config.epochs}] train loss={total / max(count, 1):.6f}"
        if config.loss == "ce":
            line += f" acc={acc:.4f}"

        if eval_set is not None and len(eval_set):
            out = predict_batched(predict_fn, eval_set.inputs)
            row = _split_metrics(config.loss, epoch, "test", out, eval_set.targets)
            metrics.append(row)
            line += f" | test loss={row.loss:.6f}"
            if config.loss == "ce":
                line += f" acc={row.accuracy:.4f}"
        log(line)
    return metrics


# ─── LipKernel 학습 ─────────────────────────────────────────

def build_network(config: TrainConfig, input_shape: Sequence[int],
                  L0: Optional[np.ndarray] = None, LQ: Optional[np.ndarray] = None) -> LipNetwork:
    return LipNetwork(config.arch, input_shape, rho=config.rho, L0=L0, LQ=LQ,
                      activation=config.activation, eps=config.eps_gramian,
                      padding=config.padding, seed=config.seed)


def train(
    config: TrainConfig,
    dataset: Dataset,
    network: Optional[LipNetwork] = None,
    eval_set: Optional[Dataset] = None,
    L0: Optional[np.ndarray] = None,
    LQ: Optional[np.ndarray] = None,
    log: Log = print,
) -> Tuple[LipNetwork, List[MetricRow]]:
    """
    매 step: tape 위에서 레이어 파라미터화 → 순전파 → 손실 → φ 로 역전파 → Adam.

    Raises:
        DivergedLoss: 손실 또는 gradient 가 유한하지 않음
    """
    net = network or build_network(config, dataset.input_shape, L0, LQ)

    def step(params, xb, yb):
        tape = ad.Tape()
        layers, leaves = net.materialize(tape)
        out = net.forward_var(xb, layers)
        loss = _loss_var(config.loss, out, yb)
        grads = tape.backward(loss)
        return float(loss.value), {name: grads[v] for name, v in leaves.items()}, out.value

    metrics = _fit(net.params, step, net.predict, config, dataset, eval_set, None, log)
    return net, metrics


# ─── 기준선 (스펙트럼 정규화 / 무제약) ─────────────────────────

class BaselineNetwork:
    """
    같은 아키텍처의 일반 가중치 네트워크.
    conv: layer{k}.K (k1, k2, c_out, c_in), fc: layer{k}.W (c_out, n_in), 편향 layer{k}.b
    """

    def __init__(self, arch: str, input_shape: Sequence[int], activation: str = "relu",
                 padding: str = "same", rho: float = 1.0, seed: int = 0):
        self.arch = arch
        self.input_shape = tuple(int(v) for v in input_shape)
        self.plans: List[LayerPlan] = plan(parse_arch(arch), self.input_shape)
        self.activation = activation
        self.padding = padding
        self.rho = float(rho)
        self.params = self._init(seed)

    def _init(self, seed: int) -> Dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        params = {}
        for k, pl in enumerate(self.plans):
            if pl.kind == "conv":
                shape = (pl.kernel[0], pl.kernel[1], pl.c_out, pl.c_in)
                fan_in = pl.kernel[0] * pl.kernel[1] * pl.c_in
                params[f"layer{k}.K"] = rng.standard_normal(shape) / math.sqrt(fan_in)
            else:
                params[f"layer{k}.W"] = rng.standard_normal((pl.c_out, pl.n_in)) / math.sqrt(pl.n_in)
            params[f"layer{k}.b"] = np.zeros(pl.c_out)
        return params

    @property
    def budget(self) -> float:
        """레이어당 Lipschitz 예산 ρ^(1/l)"""
        return self.rho ** (1.0 / len(self.plans))

    def layer_norm(self, k: int) -> float:
        pl = self.plans[k]
        if pl.kind == "conv":
            kernel = statespace.Kernel2D(self.params[f"layer{k}.K"], pl.stride)
            return statespace.conv_operator_norm(kernel, pl.in_size, self.padding)
        return linalg.spectral_norm(self.params[f"layer{k}.W"])

    def project(self, params: Optional[Dict[str, np.ndarray]] = None) -> None:
        """W ← W·min(1, budget/σ_max(W))"""
        params = self.params if params is None else params
        for k, pl in enumerate(self.plans):
            name = f"layer{k}.K" if pl.kind == "conv" else f"layer{k}.W"
            sigma = self.layer_norm(k)
            if sigma > self.budget:
                params[name] = params[name] * (self.budget / sigma)

    def forward_var(self, x, leaves: Dict[str, ad.Var]) -> ad.Var:
        tape = ad.tape_of(*leaves.values())
        h = ad.lift(np.asarray(x, dtype=float), tape)
        if len(self.input_shape) == 2:
            h = ad.reshape(h, (h.shape[0], self.input_shape[0], 1, self.input_shape[1]))
        for k, pl in enumerate(self.plans):
            b = leaves[f"layer{k}.b"]
            if pl.kind == "conv":
                h = ad.conv2d(h, leaves[f"layer{k}.K"], pl.stride, self.padding)
                h = ad.activation(ad.add_bias(h, b, axis=1), self.activation)
                if pl.pool is not None:
                    h = ad.pool2d(h, pl.pool.op, pl.pool_window, pl.pool_stride)
                continue
            if h.ndim == 4:
                h = ad.flatten_pixels(h)
            h = ad.add_bias(h @ leaves[f"layer{k}.W"].T, b, axis=1)
            if pl.kind == "fc":
                h = ad.activation(h, self.activation)
        return h

    def to_plain(self) -> PlainNetwork:
        layers = []
        spatial = len(self.input_shape) > 1
        for k, pl in enumerate(self.plans):
            b = np.array(self.params[f"layer{k}.b"])
            if pl.kind == "conv":
                kernel = statespace.Kernel2D(np.array(self.params[f"layer{k}.K"]), pl.stride, b)
                layers += [ConvLayer(kernel, self.padding), Activation(self.activation)]
                if pl.pool is not None:
                    layers.append(PoolLayer(pl.pool.op, pl.pool_window, pl.pool_stride))
                continue
            if spatial:
                layers.append(Flatten())
                spatial = False
            layers.append(FcLayer(np.array(self.params[f"layer{k}.W"]), b))
            if pl.kind == "fc":
                layers.append(Activation(self.activation))
        return PlainNetwork(tuple(layers), self.input_shape, rho=self.rho, arch=self.arch)


def spectral_baseline_train(
    config: TrainConfig,
    dataset: Dataset,
    project: bool = True,
    eval_set: Optional[Dataset] = None,
    log: Log = print,
) -> Tuple[PlainNetwork, List[MetricRow]]:
    """
    project=True: 매 step 후 레이어별 스펙트럼 노름을 ρ^(1/l) 로 투영 (곱 ≤ ρ)
    project=False: 제약 없는 vanilla 학습
    """
    base = BaselineNetwork(config.arch, dataset.input_shape, config.activation, config.padding,
                           config.rho, config.seed)
    if project:
        base.project()

    def step(params, xb, yb):
        tape = ad.Tape()
        leaves = {name: tape.leaf(v, name=name) for name, v in params.items()}
        out = base.forward_var(xb, leaves)
        loss = _loss_var(config.loss, out, yb)
        grads = tape.backward(loss)
        return float(loss.value), {name: grads[v] for name, v in leaves.items()}, out.value

    def predict(x):
        return forward(base.to_plain(), x)

    metrics = _fit(base.params, step, predict, config, dataset, eval_set,
                   base.project if project else None, log)
    plain = base.to_plain()
    # 무제약 학습은 보장된 상한이 없음
    return (plain if project else replace(plain, rho=None)), metrics


# ─── 적대적 공격 ─────────────────────────────────────────────

def pgd_attack(
    net: PlainNetwork,
    inputs: np.ndarray,
    labels: np.ndarray,
    eps: float,
    steps: int = 10,
    step_size: Optional[float] = None,
) -> np.ndarray:
    """
    ℓ2 PGD: 손실 gradient 를 샘플별 ℓ2 정규화해서 상승, 매 step ε-ball 로 투영.
    step_size 기본값 2.5·ε/steps.
    """
    x = np.asarray(inputs, dtype=float)
    if eps <= 0 or steps < 1:
        return x.copy()
    alpha = 2.5 * eps / steps if step_size is None else step_size
    axes = tuple(range(1, x.ndim))
    delta = np.zeros_like(x)

    for _ in range(steps):
        tape = ad.Tape()
        xv = tape.leaf(x + delta)
        loss = ad.cross_entropy(forward_var(net, xv), labels)
        g = tape.backward(loss)[xv]
        norm = np.sqrt(np.sum(g * g, axis=axes, keepdims=True))
        delta = delta + alpha * np.divide(g, norm, out=np.zeros_like(g), where=norm > 0)
        dnorm = np.sqrt(np.sum(delta * delta, axis=axes, keepdims=True))
        delta = delta * np.minimum(1.0, eps / np.maximum(dnorm, 1e-300))
    return x + delta


def adversarial_accuracy(net: PlainNetwork, ds: Dataset, eps: float, steps: int = 10,
                         batch_size: int = 256) -> float:
    correct = 0
    for i in range(0, len(ds), batch_size):
        xb, yb = ds.inputs[i:i + batch_size], ds.targets[i:i + batch_size]
        adv = pgd_attack(net, xb, yb, eps, steps)
        correct += int(np.sum(np.argmax(forward(net, adv), axis=1) == yb))
    return correct / max(len(ds), 1)


# ─── cosine 회귀 ─────────────────────────────────────────────

COSINE_ARCH = "f(2).f(1)"


def hand_cosine_network() -> PlainNetwork:
    """
    y = −tanh(−x−1) + tanh(−x+1) − 0.5
    W₁ = (−1, −1)ᵀ, b₁ = (−1, 1)ᵀ, W₂ = (−1, 1), b₂ = −0.5 (각 스펙트럼 노름 √2, Lipschitz 1)
    """
    return PlainNetwork(
        layers=(
            FcLayer(np.array([[-1.0], [-1.0]]), np.array([-1.0, 1.0])),
            Activation("tanh"),
            FcLayer(np.array([[-1.0, 1.0]]), np.array([-0.5])),
        ),
        input_shape=(1,),
        rho=1.0,
        arch=COSINE_ARCH,
    )


def cosine_config(epochs: int = 500, lr: float = 0.05, batch_size: int = 50, seed: int = 0,
                  rho: float = 1.0) -> TrainConfig:
    return make_config(arch=COSINE_ARCH, rho=rho, lr=lr, epochs=epochs, batch_size=batch_size,
                       seed=seed, loss="mse", activation="tanh")


def mse_of(predict: Callable[[np.ndarray], np.ndarray], ds: Dataset) -> float:
    return _loss_np("mse", predict(ds.inputs), ds.targets)
