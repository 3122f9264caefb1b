"""Cascade-forest regression and geostatistics for high resolution PM2.5 mapping."""

from pm25map.data import FEATURE_NAMES, Dataset, FeatureSchema, MinMaxScaler

__version__ = "0.1.0"

__all__ = ["FEATURE_NAMES", "Dataset", "FeatureSchema", "MinMaxScaler", "__version__"]
