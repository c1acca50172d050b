"""Bias-corrected Adam over tape tensors, with per-group learning rates."""

import numpy as np


class NumericFailure(RuntimeError):
    """Raised when optimization hits non-finite gradients."""


class Adam:
    """Standard Adam. Groups are (params, lr) pairs; lr can be retuned
    per step via set_lr (used by the position learning-rate schedule).
    """

    def __init__(self, groups, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.groups = []
        for name, params, lr in groups:
            params = list(params)
            state = [{"m": np.zeros_like(p.data, dtype=np.float32),
                      "v": np.zeros_like(p.data, dtype=np.float32)} for p in params]
            self.groups.append({"name": name, "params": params, "lr": float(lr), "state": state})

    def set_lr(self, name, lr):
        for g in self.groups:
            if g["name"] == name:
                g["lr"] = float(lr)
                return
        raise KeyError(name)

    def zero_grad(self):
        for g in self.groups:
            for p in g["params"]:
                p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for g in self.groups:
            lr = g["lr"]
            for p, st in zip(g["params"], g["state"]):
                if p.grad is None:
                    continue
                grad = p.grad
                if not np.all(np.isfinite(grad)):
                    raise NumericFailure(f"non-finite gradient in parameter '{p.name or g['name']}'")
                m = st["m"]
                v = st["v"]
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * np.square(grad)
                update = (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
                p.data -= update.astype(p.data.dtype)

    def replace_param(self, name, index, new_param, keep_rows=None, new_rows=0):
        """Swap a parameter after clone/split/prune, carrying moment rows.

        keep_rows indexes surviving rows of the old moments; new_rows fresh
        rows are appended as zeros (convention for freshly added Gaussians).
        """
        for g in self.groups:
            if g["name"] != name:
                continue
            st = g["state"][index]
            for key in ("m", "v"):
                old = st[key]
                kept = old[keep_rows] if keep_rows is not None else old[:0]
                pad = np.zeros((new_rows,) + old.shape[1:], dtype=old.dtype)
                st[key] = np.concatenate([kept, pad], axis=0)
                assert st[key].shape == new_param.data.shape
            g["params"][index] = new_param
            return
        raise KeyError(name)

    def reset_moments(self, name):
        for g in self.groups:
            if g["name"] == name:
                for st in g["state"]:
                    st["m"][:] = 0
                    st["v"][:] = 0
                return
        raise KeyError(name)
