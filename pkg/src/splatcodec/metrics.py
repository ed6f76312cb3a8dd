"""Distortion and rate metrics: PSNR, multi-view test loss, and
Bjontegaard rate/quality deltas over rate-distortion curves."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .render import render

PSNR_CAP = 99.0


def _samples(image):
    pixels = getattr(image, "pixels", image)
    return np.asarray(pixels, dtype=np.float64)


def psnr(a, b):
    """10*log10(1/MSE) with unit peak, capped at 99 dB."""
    pa, pb = _samples(a), _samples(b)
    if pa.shape != pb.shape:
        raise ValueError("image dimensions differ: %s vs %s"
                         % (pa.shape, pb.shape))
    mse = float(np.mean((pa - pb) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def test_loss(cloud, cameras, references, background=(0.0, 0.0, 0.0),
              threads=1):
    """Mean per-pixel squared error and mean PSNR over the views."""
    if len(cameras) != len(references):
        raise ValueError("need one reference image per camera")
    if not cameras:
        raise ValueError("need at least one view")
    mses, psnrs = [], []
    for cam, ref in zip(cameras, references):
        img = render(cloud, cam, background=background, threads=threads)
        ref_pixels = _samples(ref)
        if ref_pixels.shape != img.pixels.shape:
            raise ValueError("reference resolution does not match camera")
        mses.append(float(np.mean((img.pixels - ref_pixels) ** 2)))
        psnrs.append(psnr(img, ref_pixels))
    return float(np.mean(mses)), float(np.mean(psnrs))


@dataclass
class RDCurve:
    """Operating points of one codec configuration, ordered by rate."""

    rates: np.ndarray
    psnrs: np.ndarray
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=np.float64)
        self.psnrs = np.asarray(self.psnrs, dtype=np.float64)
        if self.rates.ndim != 1 or self.rates.shape != self.psnrs.shape:
            raise ValueError("rates and psnrs must be matching vectors")
        if self.rates.size == 0:
            raise ValueError("curve needs at least one point")
        if np.any(self.rates <= 0):
            raise ValueError("rates must be positive")
        if np.any(np.diff(self.rates) <= 0):
            raise ValueError("rates must be strictly increasing")
        if not np.all(np.isfinite(self.psnrs)):
            raise ValueError("PSNR values must be finite")
        if not self.labels:
            self.labels = ["pt%d" % i for i in range(self.rates.size)]
        if len(self.labels) != self.rates.size:
            raise ValueError("one label per point required")


def write_rd_csv(curve, path):
    """CSV export: header then label,bits,psnr rows."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "bits", "psnr"])
        for label, bits, quality in zip(curve.labels, curve.rates,
                                        curve.psnrs):
            writer.writerow([label, "%.17g" % bits, "%.17g" % quality])


def read_rd_csv(path):
    """Parse the write_rd_csv format back into a curve."""
    labels, rates, psnrs = [], [], []
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["label", "bits", "psnr"]:
            raise ValueError("expected header label,bits,psnr")
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ValueError("malformed R-D row: %r" % (row,))
            labels.append(row[0])
            rates.append(float(row[1]))
            psnrs.append(float(row[2]))
    return RDCurve(rates=rates, psnrs=psnrs, labels=labels)


def _fit_and_average(x_ref, y_ref, x_test, y_test, what):
    lo = max(x_ref.min(), x_test.min())
    hi = min(x_ref.max(), x_test.max())
    if not hi > lo:
        raise ValueError(
            "curves have no overlapping %s range: reference spans "
            "[%g, %g], test spans [%g, %g]"
            % (what, x_ref.min(), x_ref.max(), x_test.min(), x_test.max())
        )
    avg = 0.0
    for x, y, sign in ((x_test, y_test, 1.0), (x_ref, y_ref, -1.0)):
        poly = np.polyfit(x, y, 3)
        integral = np.polyval(np.polyint(poly), [lo, hi])
        avg += sign * (integral[1] - integral[0]) / (hi - lo)
    return avg


def bd_metrics(reference, test):
    """Bjontegaard deltas (bd_rate percent, bd_psnr dB).

    Cubic least-squares fits of PSNR against log10(rate) (and the
    transposed fit for bd_rate), integrated over the overlap. Negative
    bd_rate means the test curve saves bitrate.
    """
    for curve in (reference, test):
        if curve.rates.size < 4:
            raise ValueError("Bjontegaard needs at least 4 points")
    log_ref = np.log10(reference.rates)
    log_test = np.log10(test.rates)
    bd_psnr = _fit_and_average(log_ref, reference.psnrs,
                               log_test, test.psnrs, "log-rate")
    avg_log_rate = _fit_and_average(reference.psnrs, log_ref,
                                    test.psnrs, log_test, "PSNR")
    bd_rate = (10.0 ** avg_log_rate - 1.0) * 100.0
    return bd_rate, bd_psnr
