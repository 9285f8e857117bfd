"""
This module implements experiment configuration handling
"""
import copy
import hashlib
import json
from functools import reduce
from typing import Any, Dict, Optional

from lpqe.actions.convergence import ConvexProblemSpec
from lpqe.errors import ConfigError
from lpqe.train.model import ModelConfig
from lpqe.train.optim import Schedule
from lpqe.train.regimes import RegimeSettings
from lpqe.utils.common import dump_dict_to_file, load_dict_from_file
from lpqe.utils.states import GradScale, HeadKind, LabRegime, RegimeKind, RoundingMode, ScheduleMode

OPTIMIZERS = ('sgd', 'adam')
DATA_KINDS = ('csv', 'criteo', 'avazu', 'synth')
LOG_BASES = ('e', '2')
# Run metadata of a manifest, never part of the configuration
RUN_SECTION = 'run'
# Keys that do not change the results of a run
RUN_ID_EXCLUDED = (RUN_SECTION, 'output', 'debug')


class Config:
    """Define experiment config object"""

    def __init__(self, config_file: Optional[str] = None, data: Optional[Dict] = None):
        """Initialise all attributes"""
        self.file: Optional[str] = config_file
        self.config: Dict = {}
        if config_file is not None:
            result = load_dict_from_file(config_file)
            if not result.status:
                raise ConfigError(result.value)
            self.config = result.value
            self.config.pop(RUN_SECTION, None)
        if data is not None:
            self.config = copy.deepcopy(data)

    def __repr__(self) -> str:
        """"String reputation of an object"""
        return u"{}".format(self.config)

    def dump(self, out_file) -> bool:
        """Dump configuration to a file"""
        return dump_dict_to_file(out_file, self.config)

    def get(self) -> Dict:
        """Get experiment configuration"""
        return self.config

    def get_attr(self, keys: str) -> Any:
        """Returns configuration nested value addressed by a dot separated string, None if missing"""
        return reduce(
            lambda d, key: d.get(key) if isinstance(d, dict) else None,
            keys.split("."),
            self.config
        )

    def set_attr(self, attr: str, value: Any, override: bool = True) -> bool:
        """Set configuration attribute if not exists, or attribute value should be overrode"""
        *parents, leaf = attr.split('.')
        branch = self.config
        for key in parents:
            if not isinstance(branch.get(key), dict):
                branch[key] = {}
            branch = branch[key]
        if leaf not in branch or (branch[leaf] != value and override):
            branch[leaf] = value
            return True
        return False

    def get_debug(self) -> bool:
        """Get debug flag"""
        return bool(self.get_attr('debug'))

    def get_run_id(self) -> str:
        """Short digest of the result-affecting part of the fully defaulted configuration"""
        relevant = {key: value for key, value in self.config.items() if key not in RUN_ID_EXCLUDED}
        blob = json.dumps(relevant, sort_keys=True, default=str).encode('utf-8')
        return hashlib.sha1(blob).hexdigest()[:12]

    def init(self) -> bool:
        """Fill every missing attribute with its default"""
        self.init_attr_data()
        self.init_attr_model()
        self.init_attr_regime()
        self.init_attr_optim()
        self.init_attr_train()
        self.init_attr_lab()
        self.init_attr_output()
        self.init_attr_debug()
        return True

    def init_attr_data(self) -> bool:
        """Init configuration attributes for the dataset"""
        self.set_attr('data.path', None, override=False)
        self.set_attr('data.input', None, override=False)
        self.set_attr('data.kind', 'synth', override=False)
        self.set_attr('data.threshold', None, override=False)
        self.set_attr('data.log_base', 'e', override=False)
        self.set_attr('data.numeric_fields', [], override=False)
        self.set_attr('data.synth.n_fields', 10, override=False)
        self.set_attr('data.synth.vocab_size', 10000, override=False)
        self.set_attr('data.synth.n_samples', 50000, override=False)
        self.set_attr('data.synth.signal', 1.0, override=False)
        return True

    def init_attr_model(self) -> bool:
        """Init configuration attributes for the CTR model"""
        self.set_attr('model.head', HeadKind.FM.value, override=False)
        self.set_attr('model.dim', 16, override=False)
        self.set_attr('model.bias', 0.0, override=False)
        return True

    def init_attr_regime(self) -> bool:
        """Init configuration attributes for the embedding regime"""
        self.set_attr('regime.kind', RegimeKind.ALPT.value, override=False)
        self.set_attr('regime.bits', 8, override=False)
        self.set_attr('regime.rounding', RoundingMode.STOCHASTIC.value, override=False)
        self.set_attr('regime.init_scale', 0.01, override=False)
        self.set_attr('regime.delta_init', None, override=False)
        self.set_attr('regime.clip_value', None, override=False)
        self.set_attr('regime.grad_scale', GradScale.BDQ.value, override=False)
        return True

    def init_attr_optim(self) -> bool:
        """Init configuration attributes for optimizers and schedules"""
        self.set_attr('optim.name', 'adam', override=False)
        self.set_attr('optim.lr', 0.001, override=False)
        self.set_attr('optim.schedule', ScheduleMode.EPOCH_DECAY.value, override=False)
        self.set_attr('optim.milestones', [6, 9], override=False)
        self.set_attr('optim.factor', 0.1, override=False)
        self.set_attr('optim.weight_decay', 1e-5, override=False)
        self.set_attr('optim.delta_optimizer', 'adam', override=False)
        self.set_attr('optim.delta_lr', 2e-5, override=False)
        # step sizes follow the embedding weight decay unless set
        if self.get_attr('optim.delta_weight_decay') is None:
            self.set_attr('optim.delta_weight_decay', self.get_attr('optim.weight_decay'), override=True)
        return True

    def init_attr_train(self) -> bool:
        """Init configuration attributes for the training loop"""
        self.set_attr('train.epochs', 15, override=False)
        self.set_attr('train.batch_size', 1024, override=False)
        self.set_attr('train.seed', 2022, override=False)
        self.set_attr('train.patience', 2, override=False)
        return True

    def init_attr_lab(self) -> bool:
        """Init configuration attributes for the convergence lab"""
        self.set_attr('lab.n_params', 1000, override=False)
        self.set_attr('lab.delta', 0.01, override=False)
        self.set_attr('lab.bits', 8, override=False)
        self.set_attr('lab.eta', 1.0, override=False)
        self.set_attr('lab.target', 0.5, override=False)
        self.set_attr('lab.schedule', ScheduleMode.INVERSE_SQRT.value, override=False)
        self.set_attr('lab.iterations', 1000, override=False)
        self.set_attr('lab.seeds', 20, override=False)
        self.set_attr('lab.regimes', [item.value for item in LabRegime], override=False)
        self.set_attr('lab.strict', True, override=False)
        return True

    def init_attr_output(self) -> bool:
        """Init configuration attribute output directory"""
        self.set_attr('output.dir', 'runs', override=False)
        return True

    def init_attr_debug(self) -> bool:
        """Init configuration attribute debug"""
        self.set_attr('debug', False, override=False)
        return True

    def _require(self, ok: bool, msg: str):
        if not ok:
            raise ConfigError(msg)

    def _positive(self, key: str, allow_zero: bool = False, allow_none: bool = False):
        value = self.get_attr(key)
        if value is None and allow_none:
            return
        self._require(isinstance(value, (int, float)) and not isinstance(value, bool)
                      and (value >= 0 if allow_zero else value > 0),
                      "{0} must be a {1} number, got {2!r}".format(key, 'non-negative' if allow_zero else 'positive',
                                                                  value))

    def validate(self) -> bool:
        """Raise ConfigError on any invalid attribute"""
        self._require(self.get_attr('data.kind') in DATA_KINDS,
                      "data.kind must be one of {0}".format(', '.join(DATA_KINDS)))
        self._require(str(self.get_attr('data.log_base')) in LOG_BASES, "data.log_base must be 'e' or '2'")
        self._positive('data.threshold', allow_none=True)
        for key in ('data.synth.n_fields', 'data.synth.vocab_size', 'data.synth.n_samples'):
            self._positive(key)
        self._positive('data.synth.signal', allow_zero=True)
        self._require(HeadKind.has_value(self.get_attr('model.head')), "model.head must be linear-sum or fm")
        self._positive('model.dim')
        self._require(RegimeKind.has_value(self.get_attr('regime.kind')),
                      "regime.kind must be one of {0}".format(', '.join(item.value for item in RegimeKind)))
        bits = self.get_attr('regime.bits')
        self._require(isinstance(bits, int) and 2 <= bits <= 16, "regime.bits must be an integer in [2, 16]")
        self._require(RoundingMode.has_value(self.get_attr('regime.rounding')), "regime.rounding must be dr or sr")
        self._require(GradScale.has_value(self.get_attr('regime.grad_scale')),
                      "regime.grad_scale must be none, dq or bdq")
        self._positive('regime.init_scale')
        self._positive('regime.delta_init', allow_none=True)
        self._positive('regime.clip_value', allow_none=True)
        for key in ('optim.name', 'optim.delta_optimizer'):
            self._require(self.get_attr(key) in OPTIMIZERS, "{0} must be sgd or adam".format(key))
        self._require(ScheduleMode.has_value(self.get_attr('optim.schedule')),
                      "optim.schedule must be constant, inverse-sqrt or epoch-decay")
        self._positive('optim.lr')
        self._positive('optim.factor')
        self._positive('optim.delta_lr', allow_zero=True)
        self._positive('optim.weight_decay', allow_zero=True)
        self._positive('optim.delta_weight_decay', allow_zero=True)
        for key in ('train.epochs', 'train.batch_size', 'train.patience', 'lab.n_params', 'lab.iterations',
                    'lab.seeds', 'lab.delta', 'lab.eta'):
            self._positive(key)
        self._require(isinstance(self.get_attr('train.seed'), int) and self.get_attr('train.seed') >= 0,
                      "train.seed must be a non-negative integer")
        target = self.get_attr('lab.target')
        self._require(isinstance(target, (int, float)) and not isinstance(target, bool), "lab.target must be a number")
        self._require(ScheduleMode.has_value(self.get_attr('lab.schedule')),
                      "lab.schedule must be constant, inverse-sqrt or epoch-decay")
        regimes = self.get_attr('lab.regimes') or []
        self._require(all(LabRegime.has_value(item) for item in regimes),
                      "lab.regimes must be a list of fp, lpt-dr, lpt-sr")
        return True

    def get_model_config(self, n_fields: int) -> ModelConfig:
        """Model settings for data with `n_fields` fields"""
        return ModelConfig(HeadKind(self.get_attr('model.head')), n_fields, int(self.get_attr('model.dim')),
                           float(self.get_attr('model.bias')))

    def get_regime_settings(self) -> RegimeSettings:
        """Embedding regime settings"""
        return RegimeSettings(
            kind=RegimeKind(self.get_attr('regime.kind')),
            bits=int(self.get_attr('regime.bits')),
            rounding=RoundingMode(self.get_attr('regime.rounding')),
            init_scale=float(self.get_attr('regime.init_scale')),
            delta_init=self.get_attr('regime.delta_init'),
            clip_value=self.get_attr('regime.clip_value'),
            grad_scale=GradScale(self.get_attr('regime.grad_scale')),
            optimizer=self.get_attr('optim.name'),
            weight_decay=float(self.get_attr('optim.weight_decay')),
            delta_optimizer=self.get_attr('optim.delta_optimizer'),
            delta_weight_decay=float(self.get_attr('optim.delta_weight_decay')),
            batch_size=int(self.get_attr('train.batch_size')),
        )

    def get_schedule(self) -> Schedule:
        """Embedding and dense learning rate schedule"""
        return Schedule(float(self.get_attr('optim.lr')), ScheduleMode(self.get_attr('optim.schedule')),
                        tuple(int(m) for m in self.get_attr('optim.milestones')), float(self.get_attr('optim.factor')))

    def get_delta_schedule(self) -> Schedule:
        """Step size schedule, same decay as the embeddings"""
        return self.get_schedule().scaled(float(self.get_attr('optim.delta_lr')))

    def get_problem_spec(self) -> ConvexProblemSpec:
        """Synthetic convex problem of the convergence lab"""
        return ConvexProblemSpec(n_params=int(self.get_attr('lab.n_params')), delta=float(self.get_attr('lab.delta')),
                                 bits=int(self.get_attr('lab.bits')), eta=float(self.get_attr('lab.eta')),
                                 schedule_mode=ScheduleMode(self.get_attr('lab.schedule')),
                                 target=float(self.get_attr('lab.target')))
