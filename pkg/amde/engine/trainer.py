from __future__ import annotations

import logging
import math
import os
import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Type, Union

import numpy as np
from tqdm import tqdm

from ..data.dataset import IdentityDataset
from ..data.occlusion import random_erase
from ..data.sampler import pk_sample
from ..data.synthetic import generate_from_config
from ..diffcore.tensor import Tensor
from ..encoder.model import EncoderModel
from ..errors import ConfigError, NumericalError
from ..losses.classification import class_entropy, softmax
from ..losses.joint import joint_loss_components
from ..losses.metric import BatchEmbeddings
from ..utils.events import EventDefinition, EventDispatcher, EventNamespace
from ..utils.json import dumps_canonical
from ..utils.rng import derive_rng, rng_state
from .checkpoint import Checkpoint, parameter_checksum, save_checkpoint
from .config import IMPLEMENTER_DEFAULTS, OptimizerKind, TrainConfig
from .optim import Adam, Optimizer, SGDMomentum

__all__ = ('StepRecord', 'EpochRecord', 'TrainingLog', 'TrainerEvents',
           'Trainer', 'TrainingResult', 'train', 'ENTROPY_BINS')

logger = logging.getLogger(__name__)

ENTROPY_BINS = 10

# first element of every training stream path, generation uses 0 and 1
SAMPLE_STREAM = 2
ERASE_STREAM = 3

PathLike = Union[str, 'os.PathLike[str]']


@dataclass
class StepRecord:
    epoch: int
    step: int
    loss_total: float
    loss_softmax: float
    loss_metric: Optional[float]
    entropies: np.ndarray
    used_k: Optional[np.ndarray]
    clamp_events: int


@dataclass
class EpochRecord:
    """Per-epoch aggregates, losses are means over the epoch's steps."""
    epoch: int
    loss_total: float
    loss_softmax: float
    loss_metric: Optional[float]
    entropy_histogram: Dict[str, List[float]]
    k_histogram: Dict[str, int]
    clamp_events: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            'epoch': self.epoch,
            'loss_total': self.loss_total,
            'loss_softmax': self.loss_softmax,
            'loss_metric': self.loss_metric,
            'entropy_histogram': self.entropy_histogram,
            'k_histogram': self.k_histogram,
            'clamp_events': self.clamp_events,
        }


@dataclass
class TrainingLog:
    config: TrainConfig
    epochs: List[EpochRecord] = field(default_factory=list)
    final_checksum: Optional[str] = None

    @property
    def final_loss(self) -> float:
        return self.epochs[-1].loss_total if self.epochs else math.nan

    @property
    def clamp_events(self) -> int:
        return sum(record.clamp_events for record in self.epochs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'config': self.config.to_dict(),
            'epochs': [record.to_dict() for record in self.epochs],
            'final_checksum': self.final_checksum,
            'implementer_defaults': IMPLEMENTER_DEFAULTS,
        }

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict())

    def write(self, path: PathLike) -> None:
        with open(path, 'w') as fp:
            fp.write(self.to_json())


class TrainerEvents(EventNamespace):

    @dataclass
    class step_completed(EventDefinition):
        trainer: Trainer
        record: StepRecord

    @dataclass
    class epoch_completed(EventDefinition):
        trainer: Trainer
        record: EpochRecord

    @dataclass
    class training_finished(EventDefinition):
        trainer: Trainer
        log: TrainingLog

    @dataclass
    class numerical_failure(EventDefinition):
        trainer: Trainer
        error: NumericalError


def log_epoch(event: TrainerEvents.epoch_completed) -> None:
    record = event.record
    metric = ('-' if record.loss_metric is None
              else f'{record.loss_metric:.6f}')
    logger.info('epoch %d: loss %.6f (softmax %.6f, metric %s), '
                'K histogram %s, %d clamp events', record.epoch,
                record.loss_total, record.loss_softmax, metric,
                record.k_histogram, record.clamp_events)
    logger.debug('epoch %d entropy histogram %s', record.epoch,
                 record.entropy_histogram)


def log_first_step(event: TrainerEvents.step_completed) -> None:
    record = event.record
    logger.debug('first step of %s: loss %.6f over %d samples',
                 event.trainer.config.label, record.loss_total,
                 len(record.entropies))


@dataclass
class TrainingResult:
    model: EncoderModel
    checkpoint: Checkpoint
    log: TrainingLog


class Trainer(EventDispatcher):
    """Runs the joint-loss training loop of one config.

    Every step draws a PK batch (and occlusion, when enabled) from
    streams derived from ``(seed, epoch, step)``, so a run is a pure
    function of its config.

    Listeners receive :class:`TrainerEvents` instances. By default every
    completed epoch is logged, and the first step once at debug level.
    """
    events = TrainerEvents

    __optimizer_classes__: Dict[OptimizerKind, Type[Optimizer]] = {
        OptimizerKind.ADAM: Adam,
        OptimizerKind.SGD_MOMENTUM: SGDMomentum,
    }

    @classmethod
    def set_optimizer_class(cls, kind: OptimizerKind,
                            klass: Type[Optimizer]) -> None:
        assert issubclass(klass, Optimizer)
        cls.__optimizer_classes__ = {**cls.__optimizer_classes__,
                                     kind: klass}

    def __init__(self, config: TrainConfig,
                 model: Optional[EncoderModel] = None) -> None:
        super().__init__()
        self.config = config
        self.encoder_config = config.resolved_encoder()
        if model is None:
            model = EncoderModel(self.encoder_config, seed=config.seed)
        elif model.frozen:
            raise ConfigError('cannot train a frozen model')
        self.model = model
        self.optimizer = self._make_optimizer()
        self.epoch = 0
        self.log = TrainingLog(config)
        self.register_listener('epoch_completed', log_epoch)
        self.once('step_completed')(log_first_step)

    def _make_optimizer(self) -> Optimizer:
        config = self.config
        klass = self.__optimizer_classes__[config.optimizer]
        parameters = self.model.parameters()
        if issubclass(klass, Adam):
            return klass(parameters, config.learning_rate,
                         betas=tuple(config.betas))
        if issubclass(klass, SGDMomentum):
            return klass(parameters, config.learning_rate,
                         momentum=config.momentum)
        return klass(parameters, config.learning_rate)

    def _fail(self, message: str, diagnostics: Dict[str, Any]) -> None:
        error = NumericalError(message, diagnostics)
        self.dispatch('numerical_failure', error)
        raise error

    def _check_finite(self, epoch: int, step: int, attr: str) -> None:
        bad = [name for name, tensor in self.model.named_parameters()
               if getattr(tensor, attr) is not None
               and not np.all(np.isfinite(getattr(tensor, attr)))]
        if bad:
            kind = 'gradients' if attr == 'grad' else 'parameters'
            self._fail(f'non-finite {kind}',
                       {'epoch': epoch, 'step': step, 'tensors': bad})

    def train_step(self, images: np.ndarray, labels: np.ndarray,
                   epoch: int = 0, step: int = 0) -> StepRecord:
        """One forward, backward and optimizer update on a batch.

        Raises
            :exc:`NumericalError`
                Raised when the loss, a gradient or an updated parameter
                is not finite.

            :exc:`SamplingError`
                Raised when the batch breaks the metric-loss contract.
        """
        self.optimizer.zero_grad()
        output = self.model.forward(Tensor(images))
        batch = BatchEmbeddings(output.embedding, output.logits, labels)
        breakdown = joint_loss_components(batch, self.config.ann,
                                          self.config.metric)

        total = breakdown.total.item()
        if not math.isfinite(total):
            self._fail('non-finite loss', {'epoch': epoch, 'step': step,
                                           'loss': total})

        breakdown.total.backward()
        self._check_finite(epoch, step, 'grad')
        self.optimizer.step()
        self._check_finite(epoch, step, 'data')

        stats = breakdown.ann_stats
        if stats is not None:
            entropies = stats.entropies
        else:
            entropies = np.array([class_entropy(p)
                                  for p in softmax(output.logits.data)])

        record = StepRecord(
            epoch, step, total, breakdown.softmax.item(),
            None if breakdown.metric is None else breakdown.metric.item(),
            entropies, None if stats is None else stats.used_k,
            0 if stats is None else stats.clamp_events)
        self.dispatch('step_completed', record)
        return record

    def _batch(self, dataset: IdentityDataset, epoch: int,
               step: int) -> tuple:
        config = self.config
        rng = derive_rng(config.seed, SAMPLE_STREAM, epoch, step)
        batch = pk_sample(dataset, config.pk, rng)
        images = batch.images

        spec = config.occlusion_train
        if spec is not None and spec.s > 0:
            images = np.stack([
                random_erase(image, spec,
                             derive_rng(config.seed, ERASE_STREAM, epoch,
                                        step, index))
                for index, image in enumerate(images)])
        return images, batch.labels

    def _entropy_histogram(self, entropies: np.ndarray
                           ) -> Dict[str, List[float]]:
        top = math.log(self.encoder_config.classes)
        edges = np.linspace(0.0, top, ENTROPY_BINS + 1)
        counts, _ = np.histogram(np.clip(entropies, 0.0, top), bins=edges)
        return {'edges': [float(e) for e in edges],
                'counts': [int(c) for c in counts]}

    def run_epoch(self, dataset: IdentityDataset,
                  epoch: Optional[int] = None) -> EpochRecord:
        epoch = self.epoch if epoch is None else epoch
        steps = self.config.steps_per_epoch
        records = []

        progress = tqdm(range(steps), desc=f'epoch {epoch + 1}',
                        leave=False, bar_format='{l_bar}{bar:20}{r_bar}',
                        disable=not self.config.progress
                        or not sys.stderr.isatty())
        for step in progress:
            images, labels = self._batch(dataset, epoch, step)
            record = self.train_step(images, labels, epoch, step)
            progress.set_postfix(loss=f'{record.loss_total:.4f}')
            records.append(record)

        metric = [r.loss_metric for r in records if r.loss_metric is not None]
        k_counts: Counter = Counter()
        for r in records:
            if r.used_k is not None:
                k_counts.update(int(k) for k in r.used_k)

        result = EpochRecord(
            epoch=epoch,
            loss_total=float(np.mean([r.loss_total for r in records])),
            loss_softmax=float(np.mean([r.loss_softmax for r in records])),
            loss_metric=float(np.mean(metric)) if metric else None,
            entropy_histogram=self._entropy_histogram(
                np.concatenate([r.entropies for r in records])),
            k_histogram={str(k): k_counts[k] for k in sorted(k_counts)},
            clamp_events=sum(r.clamp_events for r in records),
        )
        self.epoch = epoch + 1
        self.log.epochs.append(result)
        self.dispatch('epoch_completed', result)
        return result

    def checkpoint(self) -> Checkpoint:
        next_stream = derive_rng(self.config.seed, SAMPLE_STREAM, self.epoch)
        return Checkpoint.from_model(self.model, self.config, self.epoch,
                                     rng_state(next_stream))

    def train(self, dataset: IdentityDataset) -> TrainingResult:
        """Runs the remaining epochs on the train split of `dataset`."""
        shape = tuple(self.encoder_config.input_shape)
        if dataset.image_shape != shape:
            raise ConfigError(f'dataset images are {dataset.image_shape}, '
                              f'the encoder expects {shape}', 'encoder')
        if max(dataset.labels) >= self.encoder_config.classes:
            raise ConfigError('dataset has more identities than the '
                              'classifier has classes', 'encoder')

        logger.info('Training %s for %d epochs of %d steps (%d parameters)',
                    self.config.label, self.config.epochs,
                    self.config.steps_per_epoch,
                    self.model.parameter_count())
        while self.epoch < self.config.epochs:
            self.run_epoch(dataset)

        self.log.final_checksum = parameter_checksum(self.model)
        self.dispatch('training_finished', self.log)
        return TrainingResult(self.model, self.checkpoint(), self.log)


def train(config: TrainConfig, dataset: Optional[IdentityDataset] = None,
          *, out_dir: Optional[PathLike] = None,
          observer: Optional[EventDispatcher] = None) -> TrainingResult:
    """Trains `config` on `dataset` (generated from ``config.data`` when
    omitted). With `out_dir` the checkpoint, training log and config are
    written there as ``checkpoint.amde``, ``train_log.json`` and
    ``config.json``. `observer` is subscribed to the trainer's events for
    the duration of the run."""
    trainer = Trainer(config)
    if dataset is None:
        dataset = generate_from_config(config.data,
                                       trainer.encoder_config.input_shape)
    if observer is not None:
        observer.subscribe(trainer)
    try:
        result = trainer.train(dataset)
    finally:
        if observer is not None:
            observer.unsubscribe(trainer)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(result.checkpoint,
                        os.path.join(out_dir, 'checkpoint.amde'))
        result.log.write(os.path.join(out_dir, 'train_log.json'))
        with open(os.path.join(out_dir, 'config.json'), 'w') as fp:
            fp.write(config.marshal())
    return result
