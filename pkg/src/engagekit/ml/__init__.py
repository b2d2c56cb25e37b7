"""Preprocessing, clustering and classifiers."""
from .classifiers import (
    DEFAULT_GRIDS, KINDS, MLP, SVM, DecisionTree, GaussianNB, RandomForest, TrainedModel,
    load_model, mlp_loss_grad, predict, save_model, train,
)
from .cluster import KMeansResult, kmeans
from .preprocessing import KnnImputer, ScalerModel, SmoteInfo, apply_scaler, fit_scaler, knn_impute, smote
