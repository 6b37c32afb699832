"""agstn: attention-adjusted graph spatio-temporal forecasting for sensor panels.

Subpackages:
    numcore     float64 matrices + reverse-mode autodiff + gradient checking
    signal      EMD / EEMD intrinsic-mode-function features
    graphs      per-step similarity graphs and graph convolution embeddings
    seqmodels   LSTM head, per-sensor 1-D conv head, attention-weight network
    model       full forward pass, parameter init, checkpoint arrays
    train       MSE objective, Adam loop, early stopping, checkpoint files
    data        panel ingestion, windowing, synthetic generator
    evaluation  MAE / RMSE / P@k / NDCG, split evaluation, baselines
    cli         operator surface (synth, decompose, train, predict,
                evaluate, inspect-graph)
"""

__version__ = "0.1.0"
