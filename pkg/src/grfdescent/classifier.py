"""Classifier built on a frozen field realization.

The model concatenates a trainable parameter vector beta (length n_params)
with an input instance (length n_inputs), evaluates the field at that
point and squashes through a sigmoid. Training is minibatch gradient
descent on cross-entropy where only beta moves; the field itself is never
modified.

The training loop exploits the additive phase structure: with the field
frequencies split as Z = [Z_P | Z_I], the phase at (beta, x) is
Z_P beta + Z_I x. Cosines and sines of the per-instance part Z_I x are
cached once in float32, after which each minibatch needs transcendentals
only for the length-M parameter phase plus a few matrix-vector products.
The prediction and gradient entry points evaluate the field exactly in
float64; the cached path is used only inside fit.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .fieldsim import build_field, default_spectral_samples, load_snapshot, save_snapshot

__all__ = [
    "ClassifierConfig",
    "FieldClassifier",
    "cross_entropy",
    "train",
    "lr_sweep",
    "critical_eta",
    "write_loss_csv",
    "write_accuracy_csv",
]

PROBA_CLAMP = 1e-12


def cross_entropy(y, y_true):
    """Cross-entropy -[y_true ln y + (1 - y_true) ln(1 - y)] with the
    probability clamped to [1e-12, 1 - 1e-12]."""
    y = np.clip(y, PROBA_CLAMP, 1.0 - PROBA_CLAMP)
    y_true = np.asarray(y_true, dtype=float)
    return -(y_true * np.log(y) + (1.0 - y_true) * np.log1p(-y))


@dataclass(frozen=True)
class ClassifierConfig:
    """Training-run description. n_params + n_inputs is the field
    dimension; M defaults to the simulator default for that dimension."""

    n_params: int
    n_inputs: int
    M: int | None = None
    eta: float = 0.01
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0
    init: str = "zero"


class FieldClassifier:
    """Field, parameter vector and training history."""

    def __init__(self, config, field=None, beta=None):
        if config.n_params < 1 or config.n_inputs < 1:
            raise ValueError("n_params and n_inputs must be positive")
        if config.init not in ("zero", "normal"):
            raise ValueError("init must be 'zero' or 'normal'")
        N = config.n_params + config.n_inputs
        M = config.M if config.M is not None else default_spectral_samples(N)
        config = replace(config, M=M)
        field_ss, shuffle_ss, init_ss = np.random.SeedSequence(int(config.seed)).spawn(3)
        if field is None:
            field_seed = int(field_ss.generate_state(1, np.uint64)[0])
            field = build_field(N, M, field_seed)
        elif field.N != N or field.M != M:
            raise ValueError("supplied field does not match the configuration")
        self.config = config
        self.field = field
        self._shuffle_ss = shuffle_ss
        if beta is not None:
            beta = np.array(beta, dtype=np.float64)
            if beta.shape != (config.n_params,):
                raise ValueError("beta must have length n_params")
        elif config.init == "normal":
            beta = np.random.Generator(np.random.PCG64(init_ss)).standard_normal(config.n_params)
        else:
            beta = np.zeros(config.n_params)
        self.beta = beta
        self.batch_history = []  # (epoch, batch, mean_loss)
        self.accuracy_history = []  # (epoch, test_accuracy)

    @property
    def n_params(self):
        return self.config.n_params

    @property
    def n_inputs(self):
        return self.config.n_inputs

    def _check_inputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_inputs:
            raise ValueError(f"inputs have dimension {X.shape[1]}, expected {self.n_inputs}")
        return X

    def raw_values(self, X):
        """Exact field values at [beta; x] for each row x of X."""
        X = self._check_inputs(X)
        Z_P = self.field.Z[:, : self.n_params]
        Z_I = self.field.Z[:, self.n_params :]
        a = Z_P @ self.beta
        out = np.empty(X.shape[0])
        chunk = max(1, int(4_000_000 // max(self.field.M, 1)))
        for k in range(0, X.shape[0], chunk):
            t = a[:, None] + Z_I @ X[k : k + chunk].T
            out[k : k + chunk] = self.field.wr @ np.cos(t) - self.field.wi @ np.sin(t)
        return out

    def predict_proba(self, X):
        """Sigmoid of the field value, one probability per input row."""
        return expit(self.raw_values(X))

    def predict(self, X):
        """Class decisions with the tie y >= 0.5 mapped to 1."""
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def beta_gradient(self, x, y_true):
        """Exact gradient of the cross-entropy at one instance w.r.t.
        beta: (y - y_true) times the parameter block of the field
        gradient at the concatenated point."""
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.n_inputs:
            raise ValueError("input has wrong dimension")
        point = np.concatenate([self.beta, x])
        value, grad = self.field.value_and_gradient(point)
        y = float(expit(value))
        return (y - float(y_true)) * grad[: self.n_params]

    def evaluate(self, dataset):
        """Accuracy on a dataset."""
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        return float(np.mean(self.predict(dataset.inputs) == dataset.labels))

    def _phase_cache(self, X):
        """float32 cosine and sine of the per-instance phases Z_I x."""
        Z_I_T = np.ascontiguousarray(self.field.Z[:, self.n_params :].T)
        n = X.shape[0]
        cosb = np.empty((n, self.field.M), dtype=np.float32)
        sinb = np.empty((n, self.field.M), dtype=np.float32)
        chunk = max(1, int(8_000_000 // max(self.field.M, 1)))
        for k in range(0, n, chunk):
            ph = X[k : k + chunk] @ Z_I_T
            np.cos(ph, out=ph)
            cosb[k : k + chunk] = ph
            ph = X[k : k + chunk] @ Z_I_T
            np.sin(ph, out=ph)
            sinb[k : k + chunk] = ph
        return cosb, sinb

    def fit(self, train_set, test_set):
        """Minibatch gradient descent on cross-entropy.

        Data are reshuffled each epoch with a seeded permutation; the
        last short batch is kept. Per-batch mean loss and per-epoch test
        accuracy are appended to the history. Returns self.
        """
        if len(train_set) == 0 or len(test_set) == 0:
            raise ValueError("empty dataset")
        X = self._check_inputs(train_set.inputs)
        labels = train_set.labels.astype(np.float64)
        cfg = self.config
        Z_P = self.field.Z[:, : self.n_params]
        wr = self.field.wr
        wi = self.field.wi
        cosb, sinb = self._phase_cache(X)
        shuffle_rng = np.random.Generator(np.random.PCG64(self._shuffle_ss))
        n = X.shape[0]
        for epoch in range(cfg.epochs):
            perm = shuffle_rng.permutation(n)
            for b, start in enumerate(range(0, n, cfg.batch_size)):
                idx = perm[start : start + cfg.batch_size]
                a = Z_P @ self.beta
                ca = np.cos(a)
                sa = np.sin(a)
                p = (wr * ca - wi * sa).astype(np.float32)
                q = (wr * sa + wi * ca).astype(np.float32)
                Cb = cosb[idx]
                Sb = sinb[idx]
                phi = (Cb @ p - Sb @ q).astype(np.float64)
                y = expit(phi)
                self.batch_history.append(
                    (epoch, b, float(np.mean(cross_entropy(y, labels[idx]))))
                )
                c = ((y - labels[idx]) / idx.size).astype(np.float32)
                s = q * (Cb.T @ c) + p * (Sb.T @ c)
                grad = -(s.astype(np.float64) @ Z_P)
                self.beta = self.beta - cfg.eta * grad
            self.accuracy_history.append((epoch, self.evaluate(test_set)))
        return self

    def save_state(self, state_path, field_path):
        """Persist beta, the configuration, the history and the field
        snapshot (written next to the state under field_path)."""
        save_snapshot(field_path, self.field)
        cfg = self.config
        np.savez(
            state_path,
            beta=self.beta,
            n_params=cfg.n_params,
            n_inputs=cfg.n_inputs,
            M=cfg.M,
            eta=cfg.eta,
            batch_size=cfg.batch_size,
            epochs=cfg.epochs,
            seed=cfg.seed,
            init=cfg.init,
            field_file=str(field_path),
            batch_history=np.array(self.batch_history, dtype=np.float64).reshape(-1, 3),
            accuracy_history=np.array(self.accuracy_history, dtype=np.float64).reshape(-1, 2),
        )

    @classmethod
    def load_state(cls, state_path, field_path=None):
        """Rebuild a classifier from save_state output."""
        data = np.load(state_path, allow_pickle=False)
        config = ClassifierConfig(
            n_params=int(data["n_params"]),
            n_inputs=int(data["n_inputs"]),
            M=int(data["M"]),
            eta=float(data["eta"]),
            batch_size=int(data["batch_size"]),
            epochs=int(data["epochs"]),
            seed=int(data["seed"]),
            init=str(data["init"]),
        )
        field = load_snapshot(field_path if field_path is not None else str(data["field_file"]))
        clf = cls(config, field=field, beta=data["beta"])
        clf.batch_history = [(int(e), int(b), float(l)) for e, b, l in data["batch_history"]]
        clf.accuracy_history = [(int(e), float(acc)) for e, acc in data["accuracy_history"]]
        return clf


def train(config, train_set, test_set):
    """Build a classifier from the configuration and fit it."""
    return FieldClassifier(config).fit(train_set, test_set)


def lr_sweep(config, etas, train_set, test_set):
    """Final test accuracy for each learning rate, other settings fixed.

    Returns a list of (eta, accuracy) in the given order; each run trains
    a fresh classifier from the same seed.
    """
    out = []
    for eta in etas:
        clf = train(replace(config, eta=float(eta)), train_set, test_set)
        out.append((float(eta), clf.accuracy_history[-1][1]))
    return out


def critical_eta(sweep_results, threshold=0.55):
    """First learning rate, in ascending order, whose accuracy falls
    below the threshold; None if all stay above."""
    for eta, acc in sorted(sweep_results):
        if acc < threshold:
            return eta
    return None


def write_loss_csv(path, batch_history):
    """CSV with header epoch,batch,mean_loss."""
    lines = ["epoch,batch,mean_loss"]
    for epoch, batch, loss in batch_history:
        lines.append(f"{int(epoch)},{int(batch)},{float(loss)!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_accuracy_csv(path, accuracy_history):
    """CSV with header epoch,test_accuracy."""
    lines = ["epoch,test_accuracy"]
    for epoch, acc in accuracy_history:
        lines.append(f"{int(epoch)},{float(acc)!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
