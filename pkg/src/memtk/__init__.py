from .checker import Finding, Report, verify
from .estimator import Diagnostics, TrainConfig, train
from .evaluator import evaluate
from .features import Corpus, FeatureSpec
from .formats import EventsFile, ExpressionsFile, ParametersFile
from .model import Model, build_model
