from .figures import save_loss_curve, save_metric_bars, save_series

__all__ = ["save_loss_curve", "save_metric_bars", "save_series"]
