"""fcst-arena: a forecasting benchmark harness.

Sliding-window preprocessing, from-scratch LSTM/TCN baselines, prompt-based
LLM forecasting, and a subprocess bridge to external pretrained models, all
behind one predict-a-window contract with unified RMSE/MAE reporting.
"""

__version__ = "0.1.0"
