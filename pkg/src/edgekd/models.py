"""Multi-head dense classifiers: shared tanh trunk, one linear head per
prediction slot, parameter/FLOP accounting, and the on-wire model format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, FormatError
from .numerics import Rng, as_matrix, dense_forward, ensure_finite, matmul_acc, tanh, tanh_backward

MODEL_MAGIC = b"MDL1"
MODEL_FORMAT_VERSION = 1
WIRE_BYTES_PER_PARAM = 4  # parameters travel as float32


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of a multi-head dense classifier.

    ``feature_tap`` selects the trunk layer whose post-activation output is
    exposed as the feature representation for feature/relation distillation;
    it defaults to the last trunk layer.
    """

    input_dim: int
    trunk_dims: tuple[int, ...]
    num_slots: int
    num_beams: int
    feature_tap: int = -1

    def __post_init__(self):
        object.__setattr__(self, "trunk_dims", tuple(int(d) for d in self.trunk_dims))
        if self.input_dim < 1:
            raise ContractError(f"input_dim must be positive, got {self.input_dim}")
        if len(self.trunk_dims) < 1 or any(d < 1 for d in self.trunk_dims):
            raise ContractError(f"trunk_dims must be positive ints, got {self.trunk_dims}")
        if self.num_slots < 1:
            raise ContractError(f"num_slots must be >= 1, got {self.num_slots}")
        if self.num_beams < 2:
            raise ContractError(f"num_beams must be >= 2, got {self.num_beams}")
        tap = self.feature_tap
        if tap < 0:
            tap += len(self.trunk_dims)
        if not 0 <= tap < len(self.trunk_dims):
            raise ContractError(
                f"feature_tap {self.feature_tap} outside trunk of depth {len(self.trunk_dims)}"
            )
        object.__setattr__(self, "feature_tap", tap)

    @property
    def tap_dim(self) -> int:
        return self.trunk_dims[self.feature_tap]

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) for every dense layer, trunk first, then one per head."""
        dims = [self.input_dim, *self.trunk_dims]
        shapes = [(dims[i + 1], dims[i]) for i in range(len(self.trunk_dims))]
        shapes += [(self.num_beams, self.trunk_dims[-1])] * self.num_slots
        return shapes


@dataclass(frozen=True)
class ForwardResult:
    logits_per_slot: tuple[np.ndarray, ...]
    tap_features: np.ndarray


@dataclass(frozen=True)
class Model:
    """Immutable parameter set for a ModelSpec.

    ``params`` holds [W0, b0, W1, b1, ...] in trunk-then-heads order; the
    arrays are marked read-only, so training always builds new collections.
    """

    spec: ModelSpec
    params: tuple[np.ndarray, ...]
    param_count: int = field(init=False)

    def __post_init__(self):
        shapes = self.spec.layer_shapes()
        if len(self.params) != 2 * len(shapes):
            raise DimensionError(
                f"expected {2 * len(shapes)} parameter tensors, got {len(self.params)}"
            )
        frozen = []
        for i, (out_dim, in_dim) in enumerate(shapes):
            w = np.ascontiguousarray(self.params[2 * i], dtype=np.float64)
            b = np.ascontiguousarray(self.params[2 * i + 1], dtype=np.float64)
            if w.shape != (out_dim, in_dim):
                raise DimensionError(
                    f"layer {i} weights {w.shape} do not match spec {(out_dim, in_dim)}"
                )
            if b.shape != (out_dim,):
                raise DimensionError(f"layer {i} bias {b.shape} does not match ({out_dim},)")
            w.flags.writeable = False
            b.flags.writeable = False
            frozen += [w, b]
        object.__setattr__(self, "params", tuple(frozen))
        object.__setattr__(self, "param_count", count_params(self.spec))

    def param_list(self) -> list[np.ndarray]:
        """Writable copies of the parameters, for training."""
        return [np.array(p) for p in self.params]


def count_params(spec: ModelSpec) -> int:
    """Total scalar parameters: sum over dense layers of in*out + out."""
    return sum(o * i + o for o, i in spec.layer_shapes())


def dense_layer_flops(in_dim: int, out_dim: int) -> int:
    """Single-sample cost of one dense layer: 2*in*out multiply-adds, plus
    out for the bias add and out for the activation or output nonlinearity."""
    return 2 * in_dim * out_dim + 2 * out_dim


def count_flops(spec: ModelSpec) -> int:
    """FLOPs for a single-sample forward pass.

    Sums dense_layer_flops over the trunk and every head; the convention is
    fixed so reduction percentages are reproducible from specs alone.
    """
    return sum(dense_layer_flops(i, o) for o, i in spec.layer_shapes())


def init_model(spec: ModelSpec, rng: Rng) -> Model:
    """Glorot-uniform weights, zero biases; deterministic in the rng stream."""
    params = []
    for out_dim, in_dim in spec.layer_shapes():
        a = np.sqrt(6.0 / (in_dim + out_dim))
        params.append(rng.uniform(-a, a, (out_dim, in_dim)))
        params.append(np.zeros(out_dim))
    return Model(spec, tuple(params))


def forward(model: Model, x: np.ndarray) -> ForwardResult:
    result, _ = forward_cached(model.spec, model.params, x)
    return result


def forward_cached(spec: ModelSpec, params, x: np.ndarray):
    """Forward pass returning (ForwardResult, activation cache for backward)."""
    xm = as_matrix(x, "x")
    if xm.shape[1] != spec.input_dim:
        raise DimensionError(f"input width {xm.shape} does not match spec input_dim "
                             f"{spec.input_dim}")
    n_trunk = len(spec.trunk_dims)
    acts = [xm]
    a = xm
    for i in range(n_trunk):
        z = dense_forward(params[2 * i], params[2 * i + 1], a)
        a = tanh(z)
        acts.append(a)
    logits = []
    for s in range(n_trunk, n_trunk + spec.num_slots):
        logits.append(dense_forward(params[2 * s], params[2 * s + 1], a))
    tap = acts[spec.feature_tap + 1]
    return ForwardResult(tuple(logits), tap), acts


def backward(spec: ModelSpec, params, acts, dlogits_per_slot, dtap=None):
    """Gradients of a scalar loss given dL/dlogits per slot and optional
    dL/dtap_features, using the activation cache from forward_cached."""
    n_trunk = len(spec.trunk_dims)
    grads: list[np.ndarray | None] = [None] * len(params)
    a_last = acts[n_trunk]
    da = np.zeros_like(a_last)
    for s in range(spec.num_slots):
        d = dlogits_per_slot[s]
        if d is None:
            continue
        li = n_trunk + s
        grads[2 * li] = matmul_acc(np.ascontiguousarray(d.T), a_last)
        grads[2 * li + 1] = d.sum(axis=0)
        da += matmul_acc(d, params[2 * li])
    for s in range(spec.num_slots):
        li = n_trunk + s
        if grads[2 * li] is None:
            grads[2 * li] = np.zeros_like(params[2 * li])
            grads[2 * li + 1] = np.zeros_like(params[2 * li + 1])
    for i in range(n_trunk - 1, -1, -1):
        if dtap is not None and i == spec.feature_tap:
            da = da + dtap
        dz = tanh_backward(acts[i + 1], da)
        grads[2 * i] = matmul_acc(np.ascontiguousarray(dz.T), acts[i])
        grads[2 * i + 1] = dz.sum(axis=0)
        if i > 0:
            da = matmul_acc(dz, params[2 * i])
    return grads


# ---------------------------------------------------------------------------
# Wire format (.mdl): little-endian header + float32 parameters
# ---------------------------------------------------------------------------

_HEAD_FIXED = struct.Struct("<4sHIH")  # magic, version, input_dim, trunk_len


def serialized_header_len(spec: ModelSpec) -> int:
    return _HEAD_FIXED.size + 4 * len(spec.trunk_dims) + struct.calcsize("<HIH")


def serialized_len(spec: ModelSpec) -> int:
    return serialized_header_len(spec) + WIRE_BYTES_PER_PARAM * count_params(spec)


def serialize(model: Model) -> bytes:
    """Pack spec and parameters; parameters are quantized to float32."""
    spec = model.spec
    out = bytearray()
    out += _HEAD_FIXED.pack(MODEL_MAGIC, MODEL_FORMAT_VERSION, spec.input_dim,
                            len(spec.trunk_dims))
    for d in spec.trunk_dims:
        out += struct.pack("<I", d)
    out += struct.pack("<HIH", spec.num_slots, spec.num_beams, spec.feature_tap)
    for p in model.params:
        out += np.ascontiguousarray(p, dtype="<f4").tobytes()
    return bytes(out)


def deserialize(payload: bytes) -> Model:
    """Inverse of serialize; raises FormatError with the failing byte offset."""
    if len(payload) < _HEAD_FIXED.size:
        raise FormatError(f"payload truncated at byte {len(payload)}", offset=len(payload))
    magic, version, input_dim, trunk_len = _HEAD_FIXED.unpack_from(payload, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    pos = _HEAD_FIXED.size
    need = pos + 4 * trunk_len + struct.calcsize("<HIH")
    if len(payload) < need:
        raise FormatError(f"header truncated at byte {len(payload)}", offset=len(payload))
    trunk_dims = struct.unpack_from(f"<{trunk_len}I", payload, pos) if trunk_len else ()
    pos += 4 * trunk_len
    num_slots, num_beams, feature_tap = struct.unpack_from("<HIH", payload, pos)
    pos += struct.calcsize("<HIH")
    try:
        spec = ModelSpec(input_dim, trunk_dims, num_slots, num_beams, feature_tap)
    except ContractError as exc:
        raise FormatError(f"header decodes to an invalid spec: {exc}", offset=4) from exc
    expected = pos + WIRE_BYTES_PER_PARAM * count_params(spec)
    if len(payload) != expected:
        raise FormatError(
            f"payload length {len(payload)} does not match expected {expected}",
            offset=min(len(payload), expected),
        )
    params = []
    for out_dim, in_dim in spec.layer_shapes():
        w_n = out_dim * in_dim
        w = np.frombuffer(payload, dtype="<f4", count=w_n, offset=pos)
        pos += 4 * w_n
        b = np.frombuffer(payload, dtype="<f4", count=out_dim, offset=pos)
        pos += 4 * out_dim
        params.append(w.astype(np.float64).reshape(out_dim, in_dim))
        params.append(b.astype(np.float64))
    model = Model(spec, tuple(params))
    ensure_finite(np.concatenate([p.reshape(-1) for p in model.params]), "parameters")
    return model


def save_model(model: Model, path) -> int:
    data = serialize(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
