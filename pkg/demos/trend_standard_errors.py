"""One trend slope under every standard-error estimator.

An overlapping-window ratio series is mimicked by a three-month moving sum of
noise around a slowly rising level, so the residuals are MA(2).  White errors
ignore that overlap; HAC, Hansen-Hodrick and the bootstraps account for it.
The beta regression keeps fitted values inside (0, 1).
"""
import numpy as np

from peerperf.trend import RatioSeries, beta_trend, linear_trend

rng = np.random.default_rng(4)
n, h = 81, 3
shocks = rng.normal(0, 0.02, n + h - 1)
noise = np.convolve(shocks, np.ones(h) / np.sqrt(h), mode="valid")
level = 0.20 + 0.0005 * np.arange(n)
months = np.arange(np.datetime64("2014-01"), np.datetime64("2014-01") + n)
series = RatioSeries(months, np.clip(level + noise, 0.01, 0.99), group="brown", horizon=h,
                     metric="heterogeneity", model="carhart4")

print(f"true slope {0.0005 * 100:.3f} pp/month")
for se, kw in [("white", {}), ("hac", {}), ("hansen_hodrick", {}),
               ("stationary_bootstrap", {"seed": 1}),
               ("block_bootstrap", {"block_length": 4, "seed": 1})]:
    r = linear_trend(series, se=se, **kw)
    print(f"{r.estimator:<22} slope {100 * r.slope:+.4f} pp/month  se {100 * r.se:.4f}  "
          f"p {r.p_value:.3f}")
b = beta_trend(series)
print(f"{'beta regression':<22} slope {b.slope:+.5f} (logit scale)  se {b.se:.5f}  "
      f"p {b.p_value:.3f}")
