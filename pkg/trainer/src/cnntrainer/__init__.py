"""Reference evaluator for the egoconf protocol: descriptor-driven CNN training."""

from .datasets import DatasetError, Split, load_dataset, mnist_available
from .descriptor import Descriptor, DescriptorError, estimate_cost, parse_descriptor
from .model import DescriptorNet
from .serve import TrainerConfig, serve
from .trainer import ResourceError, TrainResult, train_and_score

__version__ = "0.1.0"
