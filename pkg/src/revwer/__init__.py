"""Room-acoustic parameter estimation and word-error-rate prediction.

Submodules:

- ``air``: energy decay curve and the 15 raw acoustic parameters
- ``corpus``: synthetic AIRs, speech-like signals, splits, WER oracle
- ``metrics``: WER alignment, correlation, RMSE, one-way ANOVA
- ``fitting``: polynomial / sigmoid fits and the Levenberg-Marquardt engine
- ``features``: log-mel feature blocks for the blind predictor
- ``nn``: minimal neural-network core with hand-written backprop
- ``predictors``: MLP and CNN-LSTM WER predictors, PCA, grid search
- ``cli``: batch pipeline front-end
"""

from . import air, corpus, errors, features, fitting, metrics, nn, predictors

__all__ = [
    "air", "corpus", "errors", "features", "fitting", "metrics", "nn",
    "predictors",
]

__version__ = "0.1.0"
