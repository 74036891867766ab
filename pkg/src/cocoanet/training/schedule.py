from __future__ import annotations

SCHEDULES = ("halve_per_epoch", "plateau_div10", "linear")


class PlateauDetector:
    """Counts plateau events: ``patience`` consecutive epochs whose validation loss
    does not improve on the best so far by more than ``min_delta``. The wait
    counter resets after each event."""

    def __init__(self, patience: int = 2, min_delta: float = 1e-4):
        self.patience, self.min_delta = patience, min_delta
        self.best = float("inf")
        self.wait = 0
        self.events = 0

    def update(self, val_loss: float) -> bool:
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.wait = 0
            return False
        self.wait += 1
        if self.wait >= self.patience:
            self.wait = 0
            self.events += 1
            return True
        return False


def count_plateaus(val_losses, patience: int = 2, min_delta: float = 1e-4) -> int:
    det = PlateauDetector(patience, min_delta)
    for v in val_losses:
        det.update(v)
    return det.events


def lr_at(schedule: str, epoch: int, lr0: float, plateau_history=(), total_epochs: int = 20,
          patience: int = 2, min_delta: float = 1e-4) -> float:
    """Learning rate for 0-based ``epoch``.

    ``plateau_history`` holds the validation losses of the epochs completed so
    far (only used by ``plateau_div10``).
    """
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if schedule == "halve_per_epoch":
        return lr0 * 2.0 ** (-epoch)
    if schedule == "plateau_div10":
        return lr0 / 10.0 ** count_plateaus(plateau_history, patience, min_delta)
    if schedule == "linear":
        return lr0 * (1.0 - epoch / total_epochs)
    raise ValueError(f"unknown lr schedule {schedule!r}; expected one of {SCHEDULES}")
