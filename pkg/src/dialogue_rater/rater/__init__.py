from .heads import Head, loss, n_return_classes, predict_from_output, smooth_return_target
from .models import CNNRater, RaterModel, RNNRater, build_rater, grad_check
from .train import (TrainConfig, evaluate, history_csv, load_rater, predict_success, save_rater,
                    sgd_train)

__all__ = [
    "CNNRater", "Head", "RNNRater", "RaterModel", "TrainConfig", "build_rater", "evaluate",
    "grad_check", "history_csv", "load_rater", "loss", "n_return_classes", "predict_from_output",
    "predict_success", "save_rater", "sgd_train", "smooth_return_target",
]
