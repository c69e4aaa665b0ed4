"""Learned WER predictors: the MLP on acoustic parameters and the blind
CNN-LSTM on mel feature blocks, plus PCA and the MLP grid search.
"""

from dataclasses import dataclass

import numpy as np

from . import features, nn
from .air import PARAM_NAMES
from .errors import ConfigShapeError, DegenerateCovariance
from .fitting import PolyModel, SigmoidModel
from .metrics import ConstantInput, pearson_abs, rmse


# -- PCA -------------------------------------------------------------------

@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray           # (k, d) eigenvector rows
    explained_variance_ratios: np.ndarray
    eigenvalues: np.ndarray          # all d eigenvalues, descending
    mean: np.ndarray
    std: np.ndarray
    dropped_columns: tuple = ()


def pca(x, k):
    """Principal components of column-standardized data.

    Zero-variance columns are dropped (flagged in the result) rather than
    failing. Returns the top-``k`` eigenvectors of the covariance matrix
    and their explained-variance ratios.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if n < d:
        raise ValueError(f"need at least {d} rows, got {n}")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    dropped = tuple(np.flatnonzero(std == 0.0).tolist())
    keep = np.flatnonzero(std > 0.0)
    if keep.size == 0:
        raise DegenerateCovariance("all columns have zero variance")
    z = (x[:, keep] - mean[keep]) / std[keep]
    cov = z.T @ z / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    ratios = eigvals / eigvals.sum()
    k = min(k, keep.size)
    return PcaResult(
        components=eigvecs[:, :k].T,
        explained_variance_ratios=ratios[:k],
        eigenvalues=eigvals,
        mean=mean[keep],
        std=std[keep],
        dropped_columns=dropped,
    )


def pca_transform(result, x):
    """Project standardized data onto the retained components."""
    z = (np.asarray(x, dtype=np.float64) - result.mean) / result.std
    return z @ result.components.T


def pca_reconstruct(result, scores):
    """Back-project component scores to standardized coordinates."""
    return np.asarray(scores) @ result.components


# -- input standardization -------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    """Column mean/std with provenance of the split they came from."""

    mean: np.ndarray
    std: np.ndarray
    source_split: str

    @classmethod
    def fit(cls, x, source_split):
        x = np.asarray(x, dtype=np.float64)
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 0, std, 1.0), source_split)

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


def _records_matrix(records):
    """(X, y) from records with complete acoustic parameters."""
    usable = [r for r in records if r.acoustic_params is not None
              and r.acoustic_params.complete]
    x = np.stack([r.acoustic_params.as_vector() for r in usable])
    y = np.array([r.true_wer for r in usable])
    return x, y, usable


# -- MLP on acoustic parameters --------------------------------------------

@dataclass(frozen=True)
class MlpConfig:
    hidden_layers: int = 1
    neurons_per_layer: int = 3
    dropout: float = 0.05
    epochs: int = 30
    input_dim: int = len(PARAM_NAMES)
    output_dim: int = 1
    learning_rate: float = 0.01
    batch_size: int = 32

    def __post_init__(self):
        if not 0 <= self.hidden_layers <= 4:
            raise ValueError("hidden_layers must be in [0, 4]")
        if not 1 <= self.neurons_per_layer <= 32:
            raise ValueError("neurons_per_layer must be in [1, 32]")


def mlp_layer_specs(config):
    """Sequential layer plan for one MLP configuration."""
    specs = []
    width = config.input_dim
    for _ in range(config.hidden_layers):
        specs.append({"kind": "dense", "in": width,
                      "out": config.neurons_per_layer})
        specs.append({"kind": "relu"})
        if config.dropout > 0:
            specs.append({"kind": "dropout", "rate": config.dropout})
        width = config.neurons_per_layer
    specs.append({"kind": "dense", "in": width, "out": config.output_dim})
    return specs


def train_mlp(train, cv, config=None, seed=0):
    """Train the acoustic-parameter MLP; returns the best-CV checkpoint.

    Inputs are standardized with training-set statistics only.
    """
    config = config or MlpConfig()
    x_tr, y_tr, _ = _records_matrix(train)
    x_cv, y_cv, _ = _records_matrix(cv)
    scaler = Standardizer.fit(x_tr, source_split="TR")
    if scaler.source_split != "TR":
        raise ValueError("standardizer must come from the training split")
    z_tr = scaler.transform(x_tr)
    z_cv = scaler.transform(x_cv)

    network = nn.build_network(mlp_layer_specs(config), seed=seed)
    weights = network.get_weights()
    state = nn.AdamState()
    adam = nn.AdamConfig(learning_rate=config.learning_rate)
    rng = np.random.default_rng(seed + 1)

    n = z_tr.shape[0]
    best = (np.inf, weights.copy(), 0)
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            out, cache = network.forward(z_tr[batch], mode="train")
            loss, grad = nn.mse_loss(out[:, 0], y_tr[batch])
            flat_grad = network.backward(cache, grad[:, None])
            weights = nn.optimizer_step(weights, flat_grad, state, adam)
            network.set_weights(weights)
            epoch_loss += loss * batch.size
        pred_cv, _ = network.forward(z_cv, mode="eval")
        cv_loss, _ = nn.mse_loss(pred_cv[:, 0], y_cv)
        curve.append((epoch_loss / n, cv_loss))
        if cv_loss < best[0]:
            best = (cv_loss, weights.copy(), epoch)
    network.set_weights(best[1])

    return nn.NetworkCheckpoint(
        arch={"type": "sequential", "layers": network.layer_specs()},
        weights=best[1],
        metadata={
            "model": "mlp",
            "epochs": config.epochs,
            "best_epoch": best[2],
            "seed": seed,
            "train_curve": curve,
            "final_cv_loss": best[0],
            "standardizer": {
                "mean": scaler.mean.tolist(),
                "std": scaler.std.tolist(),
                "source_split": scaler.source_split,
            },
            "config": {
                "hidden_layers": config.hidden_layers,
                "neurons_per_layer": config.neurons_per_layer,
            },
        },
    )


GRID_L = (0, 1, 2, 3, 4)
GRID_N = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32)
GRID_N_FULL = tuple(range(1, 33))


def grid_search_mlp(train, cv, seed=0, epochs=30, full_n_axis=False):
    """Grid search over hidden-layer count and width on the CV loss.

    Returns ``(best_L, best_N, table)`` where table rows are
    ``(L, N, cv_loss, param_count)``. Ties break toward fewer parameters.
    """
    table = []
    n_axis = GRID_N_FULL if full_n_axis else GRID_N
    for layers in GRID_L:
        widths = (n_axis[0],) if layers == 0 else n_axis
        for width in widths:
            config = MlpConfig(hidden_layers=layers, neurons_per_layer=width,
                               epochs=epochs)
            checkpoint = train_mlp(train, cv, config, seed=seed)
            count = nn.build_network(mlp_layer_specs(config)).param_count()
            table.append((layers, width, checkpoint.metadata["final_cv_loss"],
                          count))
    best = min(table, key=lambda row: (row[2], row[3]))
    return best[0], best[1], table


# -- CNN-LSTM --------------------------------------------------------------

@dataclass(frozen=True)
class CnnLstmConfig:
    conv_channels: tuple = (4, 6, 8, 8)
    kernel: int = 3
    embed_dim: int = 16
    lstm_hidden: int = 4
    input_shape: tuple = (1, features.N_MELS, features.BLOCK_FRAMES)
    param_bounds: tuple = (7000, 9000)

    def __post_init__(self):
        if len(self.conv_channels) != 4:
            raise ConfigShapeError("need exactly 4 conv layers")


class CnnLstm:
    """Per-block CNN encoder followed by an LSTM over the block sequence.

    Each 26x100 block runs through four 3x3 conv+ReLU layers (average
    pooling after all but the first), is flattened and embedded, and the
    LSTM's final state after the last block feeds a scalar head.
    """

    def __init__(self, config=None, seed=0):
        config = config or CnnLstmConfig()
        self.config = config
        rng = np.random.default_rng(seed)
        ch = config.conv_channels
        k = config.kernel
        block_layers = [
            nn.Conv2d(config.input_shape[0], ch[0], k, k, rng), nn.Relu(),
            nn.Conv2d(ch[0], ch[1], k, k, rng), nn.Relu(), nn.AvgPool(),
            nn.Conv2d(ch[1], ch[2], k, k, rng), nn.Relu(), nn.AvgPool(),
            nn.Conv2d(ch[2], ch[3], k, k, rng), nn.Relu(), nn.AvgPool(),
            nn.Flatten(),
        ]
        flat_dim = self._probe_flat_dim(block_layers)
        block_layers.append(nn.Dense(flat_dim, config.embed_dim, rng))
        self.block_layers = block_layers
        self.lstm = nn.Lstm(config.embed_dim, config.lstm_hidden, rng)
        self.head = nn.Dense(config.lstm_hidden, 1, rng)
        lo, hi = config.param_bounds
        count = self.param_count()
        if not lo <= count <= hi:
            raise ConfigShapeError(
                f"parameter count {count} outside [{lo}, {hi}]"
            )

    def _probe_flat_dim(self, block_layers):
        x = np.zeros(self.config.input_shape)
        rng = np.random.default_rng(0)
        for layer in block_layers:
            x, _ = layer.forward(x, False, rng)
        return x.size

    @property
    def _all_layers(self):
        return [*self.block_layers, self.lstm, self.head]

    def param_count(self):
        return sum(layer.param_count() for layer in self._all_layers)

    def has_dropout(self):
        return False

    def get_weights(self):
        return np.concatenate(
            [p.ravel() for layer in self._all_layers for p in layer.params]
        )

    def set_weights(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for layer in self._all_layers:
            for p in layer.params:
                p[...] = flat[offset : offset + p.size].reshape(p.shape)
                offset += p.size

    def forward_utterance(self, blocks):
        """Scalar WER prediction for one utterance's block sequence."""
        rng = np.random.default_rng(0)
        embeds = []
        block_caches = []
        for block in blocks:
            x = np.asarray(block, dtype=np.float64)[None, :, :]
            caches = []
            for layer in self.block_layers:
                x, cache = layer.forward(x, False, rng)
                caches.append(cache)
            embeds.append(x)
            block_caches.append(caches)
        sequence = np.stack(embeds)
        h, lstm_cache = self.lstm.forward(sequence, False, rng)
        out, head_cache = self.head.forward(h, False, rng)
        return float(out[0]), (block_caches, lstm_cache, head_cache)

    def backward_utterance(self, cache, grad_pred):
        """Flat parameter gradient from the scalar prediction gradient."""
        block_caches, lstm_cache, head_cache = cache
        grad_h, head_grads = self.head.backward(np.array([grad_pred]),
                                                head_cache)
        grad_seq, lstm_grads = self.lstm.backward(grad_h, lstm_cache)
        block_grads = [
            [np.zeros_like(p) for p in layer.params]
            for layer in self.block_layers
        ]
        for t, caches in enumerate(block_caches):
            grad = grad_seq[t]
            for i in range(len(self.block_layers) - 1, -1, -1):
                grad, pgrads = self.block_layers[i].backward(grad, caches[i])
                for acc, g in zip(block_grads[i], pgrads):
                    acc += g
        flat = []
        for grads in block_grads:
            flat.extend(g.ravel() for g in grads)
        flat.extend(g.ravel() for g in lstm_grads)
        flat.extend(g.ravel() for g in head_grads)
        return np.concatenate(flat)

    def loss_and_grad(self, blocks, target):
        pred, cache = self.forward_utterance(blocks)
        loss, grad = nn.mse_loss(np.array([pred]), np.array([target]))
        return loss, self.backward_utterance(cache, float(grad[0]))


def build_cnn_lstm(config=None, seed=0, verbose=True):
    """Build the blind predictor and report its parameter count."""
    model = CnnLstm(config, seed=seed)
    if verbose:
        print(f"CNN-LSTM parameter count: {model.param_count()}")
    return model


def featurize_records(records):
    """Attach mel feature blocks to records carrying audio."""
    from .corpus import read_wav

    for record in records:
        if getattr(record, "feature_blocks", None) is not None:
            continue
        signal = record.samples
        if signal is None:
            if not record.audio_path:
                raise ValueError(
                    f"{record.utterance_id}: no audio to featurize"
                )
            signal = read_wav(record.audio_path)
        record.feature_blocks = features.extract_blocks(signal)
    return records


def train_cnn_lstm(train, cv, epochs=100, seed=0, learning_rate=1e-3,
                   config=None, verbose=False):
    """Train the blind CNN-LSTM; returns the best-CV checkpoint.

    Records must carry feature blocks (see :func:`featurize_records`).
    Per-utterance squared-error updates with an adaptive-moment
    optimizer; deterministic given ``seed``.
    """
    featurize_records(train)
    featurize_records(cv)
    model = build_cnn_lstm(config, seed=seed, verbose=verbose)
    weights = model.get_weights()
    state = nn.AdamState()
    adam = nn.AdamConfig(learning_rate=learning_rate)
    rng = np.random.default_rng(seed + 1)

    best = (np.inf, weights.copy(), 0)
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(len(train))
        epoch_loss = 0.0
        for idx in order:
            record = train[idx]
            loss, grad = model.loss_and_grad(record.feature_blocks,
                                             record.true_wer)
            weights = nn.optimizer_step(weights, grad, state, adam)
            model.set_weights(weights)
            epoch_loss += loss
        cv_preds = np.array([
            model.forward_utterance(r.feature_blocks)[0] for r in cv
        ])
        cv_loss, _ = nn.mse_loss(cv_preds, np.array([r.true_wer for r in cv]))
        curve.append((epoch_loss / len(train), cv_loss))
        if verbose:
            print(f"epoch {epoch}: train {curve[-1][0]:.5f} cv {cv_loss:.5f}")
        if cv_loss < best[0]:
            best = (cv_loss, weights.copy(), epoch)
    model.set_weights(best[1])

    return nn.NetworkCheckpoint(
        arch={"type": "cnn_lstm", "seed": seed},
        weights=best[1],
        metadata={
            "model": "cnn_lstm",
            "epochs": epochs,
            "best_epoch": best[2],
            "seed": seed,
            "train_curve": curve,
            "final_cv_loss": best[0],
        },
    )


def restore_model(checkpoint):
    """Rebuild a trained predictor from its checkpoint."""
    kind = checkpoint.arch.get("type")
    if kind == "sequential":
        return nn.restore_sequential(checkpoint,
                                     seed=checkpoint.metadata.get("seed", 0))
    if kind == "cnn_lstm":
        model = CnnLstm(seed=checkpoint.arch.get("seed", 0))
        model.set_weights(checkpoint.weights.astype(np.float64))
        return model
    raise ValueError(f"unknown checkpoint type: {kind}")


# -- evaluation ------------------------------------------------------------

def predict_records(model_or_checkpoint, records):
    """Per-record WER predictions for any supported predictor."""
    obj = model_or_checkpoint
    if isinstance(obj, nn.NetworkCheckpoint):
        meta = obj.metadata
        model = restore_model(obj)
        if meta.get("model") == "mlp":
            scaler = Standardizer(
                np.array(meta["standardizer"]["mean"]),
                np.array(meta["standardizer"]["std"]),
                meta["standardizer"]["source_split"],
            )
            x, _, usable = _records_matrix(records)
            out, _ = model.forward(scaler.transform(x), mode="eval")
            return dict(zip((r.utterance_id for r in usable), out[:, 0]))
        featurize_records(records)
        return {
            r.utterance_id: model.forward_utterance(r.feature_blocks)[0]
            for r in records
        }
    if isinstance(obj, (PolyModel, SigmoidModel)):
        raise ValueError(
            "fit models need a parameter index; wrap with ParamFitPredictor"
        )
    return {r.utterance_id: obj.predict(r) for r in records}


@dataclass(frozen=True)
class ParamFitPredictor:
    """Adapter: a fitted curve applied to one acoustic parameter."""

    model: object
    param_index: int

    def predict(self, record):
        return float(
            self.model(record.acoustic_params.as_vector()[self.param_index])
        )


def evaluate_predictor(model_or_checkpoint, test):
    """Score a predictor on held-out records.

    Returns ``(rho, rmse, rows)``; ``rho`` is NaN for a constant
    predictor. Rows are ``(utterance_id, true_wer, predicted_wer)``.
    """
    preds = predict_records(model_or_checkpoint, test)
    rows = [
        (r.utterance_id, r.true_wer, preds[r.utterance_id])
        for r in test if r.utterance_id in preds
    ]
    truth = np.array([row[1] for row in rows])
    predicted = np.array([row[2] for row in rows])
    try:
        rho = pearson_abs(predicted, truth)
    except ConstantInput:
        rho = float("nan")
    return rho, rmse(predicted, truth), rows
