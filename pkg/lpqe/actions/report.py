"""
Markdown summaries of training runs and lab sweeps
"""
import os

from lpqe.actions.convergence import LabSummary
from lpqe.actions.trainer import TrainResult
from lpqe.session.config import Config
from lpqe.utils.common import dump_to_file
from lpqe.utils.states import LabRegime
from lpqe.utils.templates import generate_report_from_template

TRAIN_TEMPLATE = 'train_summary.md.j2'
LAB_TEMPLATE = 'lab_summary.md.j2'


class TrainReport:
    """Export a training run summary"""

    def __init__(self, config: Config, result: TrainResult, out_dir, version: str = ''):
        """Initialise all attributes"""
        self.config = config
        self.result = result
        self.out_file = os.path.join(out_dir, 'summary.md')
        self.version = version

    def generate(self) -> bool:
        """Render the template and dump it to file"""
        content = generate_report_from_template(
            TRAIN_TEMPLATE, version=self.version, config=self.config.get(), result=self.result,
            footprint=self.result.footprint.as_dict(), records=[r.as_dict() for r in self.result.records])
        return dump_to_file(self.out_file, content)


class LabReport:
    """Export a convergence lab summary"""

    def __init__(self, summary: LabSummary, out_dir, version: str = ''):
        """Initialise all attributes"""
        self.summary = summary
        self.out_file = os.path.join(out_dir, 'summary.md')
        self.version = version

    def rows(self):
        """Mean suboptimality per regime and horizon"""
        return [{'regime': regime.value,
                 'values': [self.summary.mean_suboptimality(regime, T) for T in self.summary.horizons]}
                for regime in self.summary.suboptimality]

    def generate(self) -> bool:
        """Render the template and dump it to file"""
        spec = self.summary.spec
        params = spec.bound_params()
        freeze = self.summary.freeze.get(LabRegime.LPT_DR, [])
        lemmas = self.summary.lemmas.get(LabRegime.LPT_DR, [])
        content = generate_report_from_template(
            LAB_TEMPLATE, version=self.version, spec=spec, params=params, summary=self.summary, rows=self.rows(),
            violations=sum(1 for r in self.summary.reports if not r.holds),
            freeze=[t for t in freeze if t is not None], never_frozen=sum(1 for t in freeze if t is None),
            lemma_steps=sum(r.coordinate_steps for r in lemmas),
            lemma_ratio=max([r.max_coordinate_ratio for r in lemmas], default=None),
            max_abs_z=max([abs(z) for z in self.summary.zscores], default=None), gap=self.summary.rounding_gap())
        return dump_to_file(self.out_file, content)
