"""
Redes densas de duas camadas (tanh + linear) com gradientes analíticos e Adam.

Política: softmax sobre os M servidores. Valor: saída escalar. Tudo em
float64; entradas podem ser um vetor (in,) ou um batch (B, in).
"""
from dataclasses import dataclass, fields, replace
from typing import Iterator, Optional, Tuple

import numpy as np

from app.core.exceptions import NonFiniteGradient, ShapeMismatch

FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpParams:
    """Pesos (out x in) e bias de cada camada"""
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        hidden, inp = self.w1.shape
        out, hidden2 = self.w2.shape
        if hidden2 != hidden or self.b1.shape != (hidden,) or self.b2.shape != (out,):
            raise ShapeMismatch(
                f"Formas inconsistentes: w1{self.w1.shape} b1{self.b1.shape} w2{self.w2.shape} b2{self.b2.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    @property
    def output_size(self) -> int:
        return self.w2.shape[0]

    def arrays(self) -> Iterator[Tuple[str, np.ndarray]]:
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def map(self, fn) -> "MlpParams":
        return MlpParams(**{name: fn(arr) for name, arr in self.arrays()})

    def zip_map(self, other: "MlpParams", fn) -> "MlpParams":
        return MlpParams(**{name: fn(arr, getattr(other, name)) for name, arr in self.arrays()})

    def copy(self) -> "MlpParams":
        return self.map(np.copy)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(arr)) for _, arr in self.arrays())

    def to_dict(self) -> dict:
        """Formato de checkpoint: formas + pesos em row-major"""
        return {
            "format": FORMAT_VERSION,
            "layers": [
                {"shape": list(self.w1.shape), "weights": self.w1.ravel().tolist(), "bias": self.b1.tolist()},
                {"shape": list(self.w2.shape), "weights": self.w2.ravel().tolist(), "bias": self.b2.tolist()},
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpParams":
        if data.get("format") != FORMAT_VERSION:
            raise ShapeMismatch(f"Formato de parâmetros desconhecido: {data.get('format')}")
        first, second = data["layers"]
        return cls(
            w1=np.array(first["weights"], dtype=np.float64).reshape(first["shape"]),
            b1=np.array(first["bias"], dtype=np.float64),
            w2=np.array(second["weights"], dtype=np.float64).reshape(second["shape"]),
            b2=np.array(second["bias"], dtype=np.float64),
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for _, arr in self.arrays()])

    @classmethod
    def from_flat(cls, flat: np.ndarray, input_size: int, hidden_size: int, output_size: int) -> "MlpParams":
        sizes = [
            ("w1", (hidden_size, input_size)),
            ("b1", (hidden_size,)),
            ("w2", (output_size, hidden_size)),
            ("b2", (output_size,)),
        ]
        expected = sum(int(np.prod(shape)) for _, shape in sizes)
        if flat.size != expected:
            raise ShapeMismatch(f"Vetor com {flat.size} valores, esperado {expected}")
        out, offset = {}, 0
        for name, shape in sizes:
            n = int(np.prod(shape))
            out[name] = np.array(flat[offset:offset + n], dtype=np.float64).reshape(shape)
            offset += n
        return cls(**out)


def num_params(input_size: int, hidden_size: int, output_size: int) -> int:
    return hidden_size * input_size + hidden_size + output_size * hidden_size + output_size


def init_mlp(
    input_size: int,
    hidden_size: int,
    output_size: int,
    rng: np.random.Generator,
    output_scale: float = 1.0,
) -> MlpParams:
    """
    Uniforme em ±sqrt(1/fan_in) para os pesos, bias zero.

    `output_scale` multiplica o limite da camada de saída; com 0 a saída
    começa constante (política uniforme). O rng é consumido igual em
    qualquer escala.
    """
    lim1 = np.sqrt(1.0 / input_size)
    lim2 = output_scale * np.sqrt(1.0 / hidden_size)
    return MlpParams(
        w1=rng.uniform(-lim1, lim1, size=(hidden_size, input_size)),
        b1=np.zeros(hidden_size),
        w2=rng.uniform(-lim2, lim2, size=(output_size, hidden_size)),
        b2=np.zeros(output_size),
    )


def zeros_like(params: MlpParams) -> MlpParams:
    return params.map(np.zeros_like)


def _as_batch(params: MlpParams, states: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(states, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.input_size:
        raise ShapeMismatch(f"Entrada {np.shape(states)} incompatível com input_size={params.input_size}")
    return x, single


def mlp_forward(params: MlpParams, states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Retorna (hidden, saída linear), ambos em batch"""
    x, _ = _as_batch(params, states)
    hidden = np.tanh(x @ params.w1.T + params.b1)
    out = hidden @ params.w2.T + params.b2
    return hidden, out


def log_softmax(logits: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """log-softmax estável (subtrai o máximo); posições mascaradas recebem -inf"""
    z = np.array(logits, dtype=np.float64)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    return np.exp(log_softmax(logits, mask))


def policy_log_probs(theta: MlpParams, states: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    _, single = _as_batch(theta, states)
    _, logits = mlp_forward(theta, states)
    logp = log_softmax(logits, mask)
    return logp[0] if single else logp


def policy_forward(theta: MlpParams, state: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Distribuição π(·|s) sobre os M servidores"""
    return np.exp(policy_log_probs(theta, state, mask))


def value_forward(w: MlpParams, state: np.ndarray):
    """V(s): float para um estado, vetor (B,) para um batch"""
    _, single = _as_batch(w, state)
    _, out = mlp_forward(w, state)
    values = out[:, 0]
    return float(values[0]) if single else values


def backward(params: MlpParams, states: np.ndarray, upstream: np.ndarray) -> MlpParams:
    """
    Gradientes de uma perda escalar em relação aos parâmetros.

    `upstream` é dPerda/dSaída com a mesma forma da saída linear: (out,) para
    um estado ou (B, out) para um batch. O forward é refeito aqui.
    """
    x, single = _as_batch(params, states)
    up = np.asarray(upstream, dtype=np.float64)
    if single:
        up = up[None, :] if up.ndim == 1 else up
    if up.shape != (x.shape[0], params.output_size):
        raise ShapeMismatch(f"Gradiente {np.shape(upstream)} incompatível com saída ({x.shape[0]}, {params.output_size})")

    hidden = np.tanh(x @ params.w1.T + params.b1)
    d_hidden = (up @ params.w2) * (1.0 - hidden ** 2)
    return MlpParams(
        w1=d_hidden.T @ x,
        b1=d_hidden.sum(axis=0),
        w2=up.T @ hidden,
        b2=up.sum(axis=0),
    )


@dataclass(frozen=True)
class AdamState:
    m: MlpParams
    v: MlpParams
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "m": self.m.to_dict(),
            "v": self.v.to_dict(),
            "step": self.step,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AdamState":
        return cls(
            m=MlpParams.from_dict(data["m"]),
            v=MlpParams.from_dict(data["v"]),
            step=int(data["step"]),
            lr=float(data["lr"]),
            beta1=float(data["beta1"]),
            beta2=float(data["beta2"]),
            eps=float(data["eps"]),
        )


def init_adam(params: MlpParams, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(m=zeros_like(params), v=zeros_like(params), step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> Tuple[MlpParams, AdamState]:
    """
    Um passo de Adam (descida) com correção de viés. Para subida, passe o
    gradiente negado.

    Raises:
        NonFiniteGradient: gradiente com NaN ou infinito
        ShapeMismatch: gradiente com formas diferentes dos parâmetros
    """
    for name, arr in params.arrays():
        if getattr(grads, name).shape != arr.shape:
            raise ShapeMismatch(f"Gradiente de {name} com forma {getattr(grads, name).shape}, esperado {arr.shape}")
    if not grads.is_finite():
        raise NonFiniteGradient("Gradiente não finito no passo de Adam")

    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = state.m.zip_map(grads, lambda m_, g: b1 * m_ + (1 - b1) * g)
    v = state.v.zip_map(grads, lambda v_, g: b2 * v_ + (1 - b2) * g * g)
    c1 = 1 - b1 ** step
    c2 = 1 - b2 ** step

    new_params = MlpParams(**{
        name: arr - state.lr * (getattr(m, name) / c1) / (np.sqrt(getattr(v, name) / c2) + state.eps)
        for name, arr in params.arrays()
    })
    return new_params, replace(state, m=m, v=v, step=step)

