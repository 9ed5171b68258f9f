"""CCSPNet assembly: spectral CNN stack, CSP branches, dense reduction, LDA.

The pipeline is wavelet-kernel convolution -> temporal convolution -> four
CSP branches -> 16 log-variance features -> dense 16-16-8-4 network -> LDA.
Training alternates two signals per batch: the CSP feedback loss L drives the
convolutional stack (wavelet parameters get their own learning rate) and the
Fisher criterion J, weighted by (1 - r), drives the dense network on detached
features. CSP projections and the LDA direction are refit per batch and held
constant during backprop.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from . import csp, dsp, lda
from .errors import ConfigError, DataError, ModelStateError

MODEL_MAGIC = b"CCSP"
MODEL_VERSION = 1

ABLATIONS = ("wkcnn", "tcnn", "frn", "lda")

# published total for the original architecture; our itemization differs,
# see parameter_report and the README
REFERENCE_PARAMETER_TOTAL = 5036


@dataclass
class ModelConfig:
    n_channels: int = 62
    n_timepoints: int = 250
    n_wavelet_kernels: int = 4
    wavelet_len: int = 32
    n_temporal_kernels: int = 4
    temporal_len: int = 64
    dense_dims: tuple = (16, 8, 4)
    loss_ratio: float = 0.3
    lr_wavelet: float = 0.001
    lr_main: float = 0.01
    l1: float = 0.01
    l2: float = 0.1
    epochs: int = 20
    batch_size: int = 300
    seed: int = 0
    sample_rate_hz: float = 100.0
    ablate: str = ""

    def validate(self):
        if self.n_wavelet_kernels != self.n_temporal_kernels:
            raise ConfigError("wavelet and temporal kernel counts must match "
                              "(depthwise pairing)")
        if self.n_channels < 4:
            raise ConfigError("need at least 4 channels for the CSP reduction")
        if self.ablate and self.ablate not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablate!r}; "
                              f"choose one of {ABLATIONS}")
        if not 0.0 <= self.loss_ratio <= 1.0:
            raise ConfigError(f"loss_ratio must be in [0, 1], got {self.loss_ratio}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if tuple(self.dense_dims)[-1] != 4:
            raise ConfigError("dense network must end in 4 outputs")


class _BnLayer:
    """Learnable affine + running statistics for one batch-norm layer."""

    def __init__(self, n_features, name):
        self.gamma = ad.Parameter(np.ones(n_features), name=f"{name}.gamma")
        self.beta = ad.Parameter(np.zeros(n_features), name=f"{name}.beta")
        self.state = ad.BatchNormState(n_features)


class CCSPNet:
    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        self.finalized = False
        self.frozen_branches = None
        self.frozen_lda = None
        self.history = []
        self._rng = np.random.default_rng(config.seed)
        self._params = {}
        self._bn_layers = {}
        self._build()
        self.optimizer = self._build_optimizer()

    # construction ---------------------------------------------------------

    def _register(self, name, value):
        p = ad.Parameter(np.asarray(value, dtype=np.float64), name=name)
        self._params[name] = p
        return p

    def _register_bn(self, name, n_features):
        layer = _BnLayer(n_features, name)
        self._params[f"{name}.gamma"] = layer.gamma
        self._params[f"{name}.beta"] = layer.beta
        self._bn_layers[name] = layer
        return layer

    def _build(self):
        cfg = self.config
        k = cfg.n_wavelet_kernels
        self.wavelet = []
        if cfg.ablate != "wkcnn":
            freqs = np.linspace(dsp.WAVELET_FREQ_MIN, dsp.WAVELET_FREQ_MAX, k)
            for i in range(k):
                self.wavelet.append((
                    self._register(f"wavelet.f.{i}", freqs[i]),
                    self._register(f"wavelet.h.{i}", 0.25),
                    self._register(f"wavelet.c.{i}", 4.0 * np.log(2.0)),
                ))
            self.bn_wk = self._register_bn("bn_wk", k)
        else:
            self.bn_wk = None

        if cfg.ablate != "tcnn":
            bound = 1.0 / np.sqrt(cfg.temporal_len)
            self.temporal_kernels = self._register(
                "temporal.kernels",
                self._rng.uniform(-bound, bound, size=(k, cfg.temporal_len)))
            self.temporal_bias = self._register("temporal.bias", np.zeros(k))
            self.bn_tc = self._register_bn("bn_tc", k)
        else:
            self.temporal_kernels = None
            self.temporal_bias = None
            self.bn_tc = None

        self.dense_w, self.dense_b, self.bn_d = [], [], []
        if cfg.ablate != "frn":
            d_in = 4 * k
            for li, d_out in enumerate(cfg.dense_dims):
                bound = 1.0 / np.sqrt(d_in)
                self.dense_w.append(self._register(
                    f"dense.{li}.w",
                    self._rng.uniform(-bound, bound, size=(d_in, d_out))))
                self.dense_b.append(self._register(f"dense.{li}.b", np.zeros(d_out)))
                if li < len(cfg.dense_dims) - 1:
                    self.bn_d.append(self._register_bn(f"bn_d.{li}", d_out))
                d_in = d_out

    def _build_optimizer(self):
        cfg = self.config
        wavelet_params = [p for triple in self.wavelet for p in triple]
        regularized, plain = [], []
        if self.temporal_kernels is not None:
            regularized.append(self.temporal_kernels)
            plain.append(self.temporal_bias)
        regularized.extend(self.dense_w)
        plain.extend(self.dense_b)
        for layer in self._bn_layers.values():
            plain.extend([layer.gamma, layer.beta])
        groups = []
        if wavelet_params:
            groups.append({"params": wavelet_params, "lr": cfg.lr_wavelet})
        if regularized:
            groups.append({"params": regularized, "lr": cfg.lr_main,
                           "l1": cfg.l1, "l2": cfg.l2})
        if plain:
            groups.append({"params": plain, "lr": cfg.lr_main})
        return ad.Adam(groups)

    # forward passes -------------------------------------------------------

    def _wavelet_kernel_nodes(self) -> ad.Node:
        cfg = self.config
        rows = []
        for f, h, c in self.wavelet:
            mp = dsp.MorletParams(float(f.value), float(h.value), float(c.value),
                                  cfg.wavelet_len, cfg.sample_rate_hz)
            w = dsp.build_morlet(mp)

            def backward(g, f=f, h=h, c=c, mp=mp):
                df, dh, dc = dsp.morlet_gradients(mp, g)
                if f.requires_grad:
                    f._accumulate(np.asarray(df))
                if h.requires_grad:
                    h._accumulate(np.asarray(dh))
                if c.requires_grad:
                    c._accumulate(np.asarray(dc))

            rows.append(ad.Node(w, (f, h, c), backward))
        return ad.stack_rows(rows)

    def forward_spectral(self, batch: np.ndarray, training: bool) -> ad.Node:
        """WKCNN + TCNN stack: N x C x T in, node with N x K x C x T out."""
        cfg = self.config
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 3 or batch.shape[1] != cfg.n_channels \
                or batch.shape[2] != cfg.n_timepoints:
            raise DataError(
                f"batch shape {batch.shape} does not match model input "
                f"(N, {cfg.n_channels}, {cfg.n_timepoints})")
        x = ad.expand_maps(ad.constant(batch[:, None]), cfg.n_wavelet_kernels)
        if cfg.ablate != "wkcnn":
            x = ad.conv_same_temporal(x, self._wavelet_kernel_nodes())
            x = ad.batch_norm(x, self.bn_wk.gamma, self.bn_wk.beta,
                              self.bn_wk.state, training)
        if cfg.ablate != "tcnn":
            x = ad.conv_same_temporal(x, self.temporal_kernels, self.temporal_bias)
            x = ad.batch_norm(x, self.bn_tc.gamma, self.bn_tc.beta,
                              self.bn_tc.state, training)
        return x

    def spectral_stages(self, batch) -> dict:
        """Eval-mode intermediate outputs keyed by stage name.

        'raw' is N x C x T; 'wkcnn' and 'tcnn' (when present) are N x K x C x T.
        """
        cfg = self.config
        batch = np.asarray(batch, dtype=np.float64)
        stages = {"raw": batch}
        x = ad.expand_maps(ad.constant(batch[:, None]), cfg.n_wavelet_kernels)
        if cfg.ablate != "wkcnn":
            x = ad.conv_same_temporal(x, self._wavelet_kernel_nodes())
            x = ad.batch_norm(x, self.bn_wk.gamma, self.bn_wk.beta,
                              self.bn_wk.state, training=False)
            stages["wkcnn"] = x.value
        if cfg.ablate != "tcnn":
            x = ad.conv_same_temporal(x, self.temporal_kernels, self.temporal_bias)
            x = ad.batch_norm(x, self.bn_tc.gamma, self.bn_tc.beta,
                              self.bn_tc.state, training=False)
            stages["tcnn"] = x.value
        return stages

    def _dense_forward(self, x: ad.Node, training: bool) -> ad.Node:
        h = x
        for li in range(len(self.dense_w)):
            h = ad.dense(h, self.dense_w[li], self.dense_b[li])
            if li < len(self.bn_d):
                layer = self.bn_d[li]
                h = ad.batch_norm(h, layer.gamma, layer.beta, layer.state, training)
        return h

    def csp_feedback_loss(self, batch, labels, training=True, frozen_wr=None):
        """Spectral forward + per-branch CSP refit + cross-entropy loss.

        Returns (loss node, per-branch feature nodes, reduced projections).
        When frozen_wr is given the refit is skipped, which keeps the loss a
        pure function of the CNN parameters for gradient checking.
        """
        labels = np.asarray(labels)
        spectral = self.forward_spectral(batch, training)
        feats, wrs = [], []
        for i in range(self.config.n_wavelet_kernels):
            xi = ad.slice_map(spectral, i)
            if frozen_wr is None:
                wr = csp.fit_branch(xi.value, labels, i + 1).w_reduced
            else:
                wr = frozen_wr[i]
            wrs.append(wr)
            feats.append(csp.spatial_filter_features_node(xi, wr))
        return csp.csp_loss(feats, labels), feats, wrs

    # training -------------------------------------------------------------

    def _discriminant_backward(self, concat: np.ndarray, labels) -> float:
        """Fit the discriminant on detached features and backprop (1-r) * J."""
        cfg = self.config
        if cfg.ablate == "frn":
            model = lda.fit(concat, labels)
            return lda.fisher_criterion(concat @ model.w, labels)
        out = self._dense_forward(ad.constant(concat), training=True)
        if cfg.ablate == "lda":
            ce = ad.scale(ad.binary_cross_entropy(ad.softmax(out),
                                                  csp.target_vectors(labels)),
                          1.0 / len(labels))
            ce.backward(seed=1.0 - cfg.loss_ratio)
            return float(ce.value)
        model = lda.fit(out.value, labels)
        projected = ad.dense(out, ad.constant(model.w[:, None]),
                             ad.constant(np.zeros(1)))
        j = lda.fisher_criterion_node(projected, labels)
        j.backward(seed=1.0 - cfg.loss_ratio)
        return float(j.value)

    def _clamp_wavelets(self):
        for f, h, _ in self.wavelet:
            f.value = np.clip(f.value, dsp.WAVELET_FREQ_MIN, dsp.WAVELET_FREQ_MAX)
            h.value = np.maximum(h.value, dsp.WAVELET_WIDTH_MIN)

    def train_step(self, batch, labels):
        """One optimizer step; returns (L, J, combined loss)."""
        labels = np.asarray(labels)
        self.optimizer.zero_grad()
        loss_node, feats, _ = self.csp_feedback_loss(batch, labels, training=True)
        loss_node.backward()
        loss_l = float(loss_node.value)
        concat = np.concatenate([f.value for f in feats], axis=1)
        loss_j = self._discriminant_backward(concat, labels)
        self.optimizer.step()
        self._clamp_wavelets()
        return loss_l, loss_j, lda.combined_loss(loss_l, loss_j,
                                                 self.config.loss_ratio)

    def train(self, trials, labels):
        """Epoch/batch loop over a training set; appends to the history log."""
        trials = np.asarray(trials, dtype=np.float64)
        labels = np.asarray(labels)
        n = len(trials)
        if n == 0:
            raise DataError("empty training set")
        for epoch in range(self.config.epochs):
            order = self._rng.permutation(n)
            for bi, start in enumerate(range(0, n, self.config.batch_size)):
                idx = order[start:start + self.config.batch_size]
                loss_l, loss_j, combined = self.train_step(trials[idx], labels[idx])
                self.history.append((float(epoch), float(bi),
                                     loss_l, loss_j, combined))
        return self

    # freezing and inference ------------------------------------------------

    def finalize(self, trials, labels):
        """Eval-mode pass over the full training set; refit and freeze CSP + LDA."""
        labels = np.asarray(labels)
        spectral = self.forward_spectral(trials, training=False)
        self.frozen_branches = [
            csp.fit_branch(spectral.value[:, i], labels, i + 1)
            for i in range(self.config.n_wavelet_kernels)]
        concat = self._frozen_features(spectral.value)
        if self.config.ablate == "frn":
            self.frozen_lda = lda.fit(concat, labels)
        elif self.config.ablate == "lda":
            self.frozen_lda = None
        else:
            out = self._dense_forward(ad.constant(concat), training=False)
            self.frozen_lda = lda.fit(out.value, labels)
        self.finalized = True
        return self

    def _frozen_features(self, spectral_value: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [csp.spatial_filter_features(spectral_value[:, i], br.w_reduced)
             for i, br in enumerate(self.frozen_branches)], axis=1)

    def predict(self, batch) -> np.ndarray:
        if not self.finalized:
            raise ModelStateError("model is not finalized; call finalize first")
        spectral = self.forward_spectral(batch, training=False)
        concat = self._frozen_features(spectral.value)
        if self.config.ablate == "frn":
            return lda.predict(self.frozen_lda, concat)
        out = self._dense_forward(ad.constant(concat), training=False)
        if self.config.ablate == "lda":
            probs = ad.softmax(ad.constant(out.value)).value
            return (probs[:, :2].sum(axis=1) > probs[:, 2:].sum(axis=1)).astype(np.uint8)
        return lda.predict(self.frozen_lda, out.value)

    # accounting -------------------------------------------------------------

    def count_parameters(self) -> dict:
        cfg = self.config
        counts = {
            "wavelet": sum(p.value.size for triple in self.wavelet for p in triple),
            "temporal": (self.temporal_kernels.value.size
                         + self.temporal_bias.value.size)
                        if self.temporal_kernels is not None else 0,
            "batch_norm": sum(layer.gamma.value.size + layer.beta.value.size
                              for layer in self._bn_layers.values()),
            "dense": sum(w.value.size + b.value.size
                         for w, b in zip(self.dense_w, self.dense_b)),
            "csp_frozen": cfg.n_wavelet_kernels * cfg.n_channels * 4,
        }
        if cfg.ablate == "lda":
            counts["lda"] = 0
        elif cfg.ablate == "frn":
            counts["lda"] = 4 * cfg.n_wavelet_kernels + 2
        else:
            counts["lda"] = cfg.dense_dims[-1] + 2
        counts["total"] = sum(counts.values())
        return counts

    # serialization ----------------------------------------------------------

    def _state_arrays(self):
        items = [(name, p.value) for name, p in self._params.items()]
        for bn_name, layer in self._bn_layers.items():
            items.append((f"{bn_name}.running_mean", layer.state.running_mean))
            items.append((f"{bn_name}.running_var", layer.state.running_var))
        items.append(("adam.step", np.asarray(float(self.optimizer.step_count))))
        for group in self.optimizer.groups:
            for p, m, v in zip(group["params"], group["m"], group["v"]):
                items.append((f"adam.m.{p.name}", m))
                items.append((f"adam.v.{p.name}", v))
        items.append(("history",
                      np.asarray(self.history, dtype=np.float64).reshape(-1, 5)))
        if self.finalized:
            for i, br in enumerate(self.frozen_branches):
                items.append((f"csp.{i}.sigma0", br.sigma0))
                items.append((f"csp.{i}.sigma1", br.sigma1))
                items.append((f"csp.{i}.w_full", br.w_full))
                items.append((f"csp.{i}.eigenvalues", br.eigenvalues))
                items.append((f"csp.{i}.w_reduced", br.w_reduced))
            if self.frozen_lda is not None:
                items.append(("lda.w", self.frozen_lda.w))
                items.append(("lda.mu",
                              np.array([self.frozen_lda.mu0, self.frozen_lda.mu1])))
        return items

    def save(self, path):
        config_text = _config_to_text(self.config).encode("utf-8")
        arrays = self._state_arrays()
        blob = bytearray()
        blob += MODEL_MAGIC
        blob += struct.pack("<HB", MODEL_VERSION, int(self.finalized))
        blob += struct.pack("<I", len(config_text))
        blob += config_text
        blob += struct.pack("<I", len(arrays))
        for name, arr in arrays:
            arr = np.asarray(arr, dtype="<f8")
            nb = name.encode("utf-8")
            blob += struct.pack("<H", len(nb)) + nb
            blob += struct.pack("<B", arr.ndim)
            for d in arr.shape:
                blob += struct.pack("<I", d)
            blob += arr.tobytes()
        with open(path, "wb") as fh:
            fh.write(bytes(blob))
        return path

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            blob = fh.read()
        reader = _Reader(blob, path)
        if reader.take(4) != MODEL_MAGIC:
            raise DataError(f"{path}: bad magic, not a model container")
        version, finalized = struct.unpack("<HB", reader.take(3))
        if version != MODEL_VERSION:
            raise DataError(f"{path}: unsupported container version {version}")
        config_text = reader.take(reader.u32()).decode("utf-8")
        config = _config_from_text(config_text, path)
        arrays = {}
        for _ in range(reader.u32()):
            name = reader.take(reader.u16()).decode("utf-8")
            ndim = struct.unpack("<B", reader.take(1))[0]
            shape = tuple(reader.u32() for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = np.frombuffer(
                reader.take(8 * count, what=f"array {name!r}"),
                dtype="<f8").reshape(shape).copy()
        model = cls(config)
        model._restore(arrays, bool(finalized), path)
        return model

    def _restore(self, arrays, finalized, path):
        def fetch(name, like=None):
            if name not in arrays:
                raise DataError(f"{path}: missing array {name!r}")
            arr = arrays[name]
            if like is not None and arr.shape != np.shape(like):
                raise DataError(f"{path}: shape mismatch for {name!r}: "
                                f"{arr.shape} vs {np.shape(like)}")
            return arr

        for name, p in self._params.items():
            p.value = fetch(name, p.value)
        for bn_name, layer in self._bn_layers.items():
            layer.state.running_mean = fetch(f"{bn_name}.running_mean",
                                             layer.state.running_mean)
            layer.state.running_var = fetch(f"{bn_name}.running_var",
                                            layer.state.running_var)
        self.optimizer.step_count = int(fetch("adam.step").reshape(()))
        for group in self.optimizer.groups:
            for i, p in enumerate(group["params"]):
                group["m"][i] = fetch(f"adam.m.{p.name}", group["m"][i])
                group["v"][i] = fetch(f"adam.v.{p.name}", group["v"][i])
        self.history = [tuple(row) for row in fetch("history")]
        if finalized:
            self.frozen_branches = []
            for i in range(self.config.n_wavelet_kernels):
                self.frozen_branches.append(csp.CspBranch(
                    sigma0=fetch(f"csp.{i}.sigma0"),
                    sigma1=fetch(f"csp.{i}.sigma1"),
                    w_full=fetch(f"csp.{i}.w_full"),
                    eigenvalues=fetch(f"csp.{i}.eigenvalues"),
                    w_reduced=fetch(f"csp.{i}.w_reduced"),
                    branch_index=i + 1))
            if self.config.ablate != "lda":
                mu = fetch("lda.mu")
                self.frozen_lda = lda.LdaModel(w=fetch("lda.w"),
                                               mu0=float(mu[0]),
                                               mu1=float(mu[1]), fitted=True)
            self.finalized = True


class _Reader:
    """Bounds-checked cursor over the container bytes."""

    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n, what="header field"):
        if self.pos + n > len(self.blob):
            raise DataError(f"{self.path}: truncated container while reading {what}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def _config_to_text(config: ModelConfig) -> str:
    lines = []
    for f in sorted(fields(ModelConfig), key=lambda f: f.name):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def _config_from_text(text: str, path) -> ModelConfig:
    values = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise DataError(f"{path}: malformed config line {line!r}")
        key, raw = line.split("=", 1)
        values[key] = raw
    kwargs = {}
    for f in fields(ModelConfig):
        if f.name not in values:
            raise DataError(f"{path}: config missing key {f.name!r}")
        raw = values.pop(f.name)
        if f.name == "dense_dims":
            kwargs[f.name] = tuple(int(x) for x in raw.split(","))
        elif f.type in ("int",):
            kwargs[f.name] = int(raw)
        elif f.type in ("float",):
            kwargs[f.name] = float(raw)
        else:
            kwargs[f.name] = raw
    if values:
        raise DataError(f"{path}: unknown config keys {sorted(values)}")
    return ModelConfig(**kwargs)


def parameter_report(model: CCSPNet) -> str:
    """Human-readable itemized parameter count."""
    counts = model.count_parameters()
    lines = [f"{name:<12} {n:>6}" for name, n in counts.items() if name != "total"]
    lines.append(f"{'total':<12} {counts['total']:>6}")
    lines.append(f"reference total for the original architecture: "
                 f"{REFERENCE_PARAMETER_TOTAL} (published figure; no itemization "
                 f"is available, so the difference cannot be reconciled exactly)")
    return "\n".join(lines)
