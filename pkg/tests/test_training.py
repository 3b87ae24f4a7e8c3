import json
import logging
import math

import numpy as np
import pytest

from amde.data import (
    PKSpec,
    Split,
    generate_from_config,
    generate_synthetic,
    pk_sample,
)
from amde.diffcore import Tensor
from amde.encoder import EncoderModel, LocalBranch
from amde.engine import (
    IMPLEMENTER_DEFAULTS,
    VARIANTS,
    Adam,
    CellMonitor,
    SGDMomentum,
    Trainer,
    TrainConfig,
    ablate,
    check_full_pipeline,
    evaluate,
    evaluate_model,
    load_checkpoint,
    parse_k_values,
    run_cell,
    save_checkpoint,
    summary_path,
    sweep,
    tiny_encoder_config,
    train,
    variant_config,
)
from amde.engine.gradcheck import BATCH_K, BATCH_P
from amde.errors import ConfigError, ContractError, NumericalError
from amde.evaluation import (
    cmc_at_k,
    mean_average_precision,
    rank_queries,
    read_metrics_csv,
)
from amde.utils.rng import derive_rng

from .conftest import tiny_encoder, tiny_train_config


def fixed_batch(dataset, p=4, k=2):
    return pk_sample(dataset, PKSpec(p=p, k=k), derive_rng(0, 42))


def test_training_is_deterministic(tiny_dataset):
    config = tiny_train_config()
    first = train(config, tiny_dataset)
    second = train(config, tiny_dataset)
    assert first.log.final_checksum == second.log.final_checksum
    assert ([e.loss_total for e in first.log.epochs]
            == [e.loss_total for e in second.log.epochs])
    assert first.checkpoint.rng == second.checkpoint.rng

    other = train(config.replace(seed=4), tiny_dataset)
    assert other.log.final_checksum != first.log.final_checksum


def test_zero_lambda_matches_softmax_only(tiny_dataset):
    softmax = train(tiny_train_config(variant='softmax'), tiny_dataset)
    joint = train(tiny_train_config(ann={'lambda': 0.0}), tiny_dataset)
    assert joint.log.final_checksum == softmax.log.final_checksum
    assert ([e.loss_total for e in joint.log.epochs]
            == [e.loss_total for e in softmax.log.epochs])
    for name, value in softmax.model.state_dict().items():
        assert joint.model.state_dict()[name].tobytes() == value.tobytes()


def test_joint_loss_overfits_a_fixed_batch(tiny_dataset):
    trainer = Trainer(tiny_train_config(learning_rate=1e-2))
    batch = fixed_batch(tiny_dataset)
    losses = [trainer.train_step(batch.images, batch.labels, 0, step)
              .loss_total for step in range(200)]
    assert losses[-1] < 0.1 * losses[0]


def test_softmax_loss_decreases_monotonically(tiny_dataset):
    config = tiny_train_config(variant='softmax', optimizer='sgd-momentum',
                               momentum=0.0, learning_rate=5e-4)
    trainer = Trainer(config)
    batch = fixed_batch(tiny_dataset)
    losses = [trainer.train_step(batch.images, batch.labels, 0, step)
              .loss_total for step in range(100)]
    for before, after in zip(losses[20:], losses[21:]):
        assert after <= before + 1e-6
    assert losses[-1] < losses[0]


def test_events_and_epoch_records(tiny_dataset):
    trainer = Trainer(tiny_train_config())
    steps, epochs, finished = [], [], []
    trainer.register_listener('step_completed', steps.append)
    trainer.register_listener('epoch_completed', epochs.append)
    trainer.register_listener('training_finished', finished.append)

    result = trainer.train(tiny_dataset)
    assert len(steps) == 6 and len(epochs) == 2 and len(finished) == 1
    assert steps[0].trainer is trainer
    assert [e.record.epoch for e in epochs] == [0, 1]
    assert finished[0].log is result.log

    record = result.log.epochs[-1]
    assert sum(record.entropy_histogram['counts']) == 3 * 6
    assert record.entropy_histogram['edges'][-1] == pytest.approx(
        math.log(6))
    assert sum(record.k_histogram.values()) == 3 * 6
    assert record.loss_metric is not None
    assert result.log.final_loss == record.loss_total
    assert result.checkpoint.epoch == 2
    assert result.checkpoint.checksum() == result.log.final_checksum


def test_softmax_only_records_no_metric(tiny_dataset):
    result = train(tiny_train_config(variant='softmax', epochs=1),
                   tiny_dataset)
    record = result.log.epochs[0]
    assert record.loss_metric is None
    assert record.k_histogram == {}
    assert record.loss_total == record.loss_softmax
    assert sum(record.entropy_histogram['counts']) == 3 * 6


def test_training_with_occlusion_changes_the_run(tiny_dataset):
    clean = train(tiny_train_config(epochs=1), tiny_dataset)
    erased = train(tiny_train_config(epochs=1,
                                     occlusion_train={'s': 0.3}),
                   tiny_dataset)
    assert clean.log.final_checksum != erased.log.final_checksum


def test_non_finite_loss_raises_and_dispatches(tiny_dataset):
    config = tiny_train_config()
    model = EncoderModel(config.resolved_encoder(), seed=0)
    model.classifier.bias.data[0] = np.nan
    trainer = Trainer(config, model)
    failures = []
    trainer.register_listener('numerical_failure', failures.append)

    batch = fixed_batch(tiny_dataset)
    with pytest.raises(NumericalError) as info:
        trainer.train_step(batch.images, batch.labels, 1, 2)
    assert info.value.diagnostics['epoch'] == 1
    assert info.value.diagnostics['step'] == 2
    assert math.isnan(info.value.diagnostics['loss'])
    assert failures[0].error is info.value


def test_trainer_rejects_frozen_models_and_wrong_data(tiny_dataset):
    config = tiny_train_config()
    model = EncoderModel(config.resolved_encoder(), seed=0)
    with pytest.raises(ConfigError):
        Trainer(config, model.freeze())

    wide = generate_synthetic(6, 4, 0.05, 0, shape=(1, 32, 16))
    with pytest.raises(ConfigError):
        Trainer(config).train(wide)


def test_train_writes_run_directory(tiny_dataset, tmp_path):
    config = tiny_train_config(epochs=1)
    result = train(config, tiny_dataset, out_dir=tmp_path / 'run')

    checkpoint = load_checkpoint(tmp_path / 'run' / 'checkpoint.amde')
    assert checkpoint.checksum() == result.log.final_checksum
    assert checkpoint.config == config

    log = json.loads((tmp_path / 'run' / 'train_log.json').read_text())
    assert log['final_checksum'] == result.log.final_checksum
    assert log['implementer_defaults'] == IMPLEMENTER_DEFAULTS
    assert len(log['epochs']) == 1

    saved = (tmp_path / 'run' / 'config.json').read_text()
    assert TrainConfig.unmarshal(saved) == config


def test_sgd_momentum_updates():
    t = Tensor([1.0, -2.0], requires_grad=True)
    optimizer = SGDMomentum([t], 0.1, momentum=0.9)
    for _ in range(2):
        t.grad = np.array([0.5, 0.5])
        optimizer.step()
    np.testing.assert_allclose(t.data, [0.855, -2.145], rtol=1e-12)


def test_adam_first_step_moves_by_learning_rate():
    t = Tensor([1.0, -2.0], requires_grad=True)
    t.grad = np.array([0.5, -4.0])
    Adam([t], 0.1).step()
    np.testing.assert_allclose(t.data, [0.9, -1.9], rtol=1e-6)


def test_optimizer_skips_missing_gradients():
    t = Tensor([1.0], requires_grad=True)
    optimizer = Adam([t], 0.1)
    optimizer.zero_grad()
    optimizer.step()
    assert t.data.tolist() == [1.0]


def test_optimizer_contracts():
    with pytest.raises(ContractError):
        Adam([Tensor([1.0], requires_grad=True)], 0.0)
    with pytest.raises(ContractError):
        SGDMomentum([Tensor([1.0])], 0.1)


def test_evaluate_rows(tiny_dataset, tmp_path):
    result = train(tiny_train_config(), tiny_dataset,
                   out_dir=tmp_path)
    rows = evaluate(result.checkpoint, tiny_dataset)
    assert [row.s for row in rows] == [0.0, 0.5]
    assert all(row.variant == 'RNLSTM_A' and row.seed == 0 for row in rows)
    for row in rows:
        assert 0.0 <= row.rank1 <= row.rank5 <= 1.0
        assert 0.0 < row.map <= 1.0

    queries, query_labels = tiny_dataset.subset(Split.QUERY)
    gallery, gallery_labels = tiny_dataset.subset(Split.GALLERY)
    frozen = result.model.freeze()
    clean = rank_queries(frozen.embed(queries), query_labels,
                         frozen.embed(gallery), gallery_labels)
    assert rows[0].rank1 == cmc_at_k(clean, 1)
    assert rows[0].map == mean_average_precision(clean)

    reloaded = evaluate(load_checkpoint(tmp_path / 'checkpoint.amde'),
                        tiny_dataset)
    assert ([(r.rank1, r.rank5, r.map) for r in reloaded]
            == [(r.rank1, r.rank5, r.map) for r in rows])


def test_evaluate_rejects_mismatched_images(tiny_dataset):
    model = EncoderModel(tiny_encoder(num_classes=6), seed=0)
    wide = generate_synthetic(6, 4, 0.05, 0, shape=(1, 32, 16))
    with pytest.raises(ConfigError):
        evaluate_model(model, wide, [0.0], variant='RN_S', seed=0)


def test_untrained_model_is_chance_level_when_noise_hides_identity():
    rank1 = []
    for seed in range(5):
        # pixel noise far above the prototype band contrast
        dataset = generate_synthetic(32, 8, 50.0, seed, shape=(1, 16, 8))
        queries, query_labels = dataset.subset(Split.QUERY)
        gallery, gallery_labels = dataset.subset(Split.GALLERY)
        model = EncoderModel(tiny_encoder(num_classes=32), seed=seed)
        results = rank_queries(model.embed(queries), query_labels,
                               model.embed(gallery), gallery_labels)
        rank1.append(cmc_at_k(results, 1))
    assert abs(np.mean(rank1) - 1 / 32) < 0.05


def test_variant_config_changes_branch_and_loss_only():
    base = tiny_train_config()
    changed = variant_config(base, 'RNFC_A')
    assert changed.encoder.local_branch is LocalBranch.FC
    assert changed.label == 'RNFC_A'

    before, after = base.to_dict(), changed.to_dict()
    for data in (before, after):
        del data['encoder']['local_branch']
        del data['variant']
    assert before == after

    with pytest.raises(ConfigError):
        variant_config(base, 'RNGRU_A')


def test_run_cell_reports_failures_as_nan(tiny_dataset):
    config = tiny_train_config(learning_rate=1e300)
    rows = run_cell(config, tiny_dataset, 'RNLSTM_A', (0.0, 0.3))
    assert [row.s for row in rows] == [0.0, 0.3]
    assert all(row.failed for row in rows)


def test_cell_monitor_follows_every_trainer(tiny_dataset):
    monitor = CellMonitor()
    run_cell(tiny_train_config(), tiny_dataset, 'RNLSTM_A', (0.0,),
             monitor=monitor)
    assert monitor.epochs == 2
    assert monitor.failures == []

    diverging = tiny_train_config(learning_rate=1e300, seed=4)
    rows = run_cell(diverging, tiny_dataset, 'RNLSTM_A', (0.0,),
                    monitor=monitor)
    assert rows[0].failed
    [(label, seed, error)] = monitor.failures
    assert (label, seed) == ('RNLSTM_A', 4)
    assert isinstance(error, NumericalError)


def test_first_step_is_logged_once(caplog, tiny_dataset):
    with caplog.at_level(logging.DEBUG, logger='amde.engine.trainer'):
        train(tiny_train_config(), tiny_dataset)
    first = [r for r in caplog.records if r.getMessage().startswith(
        'first step of RNLSTM_A')]
    assert len(first) == 1


def test_ablate_writes_rows_and_summary(tmp_path):
    out = tmp_path / 'ablation.csv'
    rows = ablate(tiny_train_config(epochs=1), 1, levels=(0.0, 0.5),
                  variants=['RN_S', 'RNLSTM_A'], out=out)
    assert [(row.variant, row.s) for row in rows] == [
        ('RN_S', 0.0), ('RN_S', 0.5), ('RNLSTM_A', 0.0), ('RNLSTM_A', 0.5)]
    assert read_metrics_csv(out) == rows

    lines = open(summary_path(out)).read().splitlines()
    assert lines[0].startswith('# implementer_defaults: ')
    assert len(lines) == 2 + 4


def test_ablate_is_byte_identical_across_runs(tmp_path):
    outputs = []
    for run in ('first', 'second'):
        out = tmp_path / run / 'ablation.csv'
        out.parent.mkdir()
        ablate(tiny_train_config(epochs=1), [0, 1], levels=(0.0, 0.5),
               variants=['RN_A', 'RNLSTM_A'], out=out, threads=2)
        outputs.append((out.read_bytes(),
                        open(summary_path(out), 'rb').read()))
    assert outputs[0] == outputs[1]


def test_trained_checkpoint_reserializes_identically(tmp_path, tiny_dataset):
    train(tiny_train_config(epochs=1), tiny_dataset, out_dir=tmp_path)
    path = tmp_path / 'checkpoint.amde'
    first = path.read_bytes()
    save_checkpoint(load_checkpoint(path), path)
    assert path.read_bytes() == first


def test_summary_path():
    assert summary_path('out/metrics.csv') == 'out/metrics.summary.csv'
    assert summary_path('metrics') == 'metrics.summary.csv'


def test_parse_k_values():
    assert parse_k_values('1, 2,adaptive') == [1, 2, 'adaptive']
    for text in ('x', '0', '1,,2'):
        with pytest.raises(ConfigError):
            parse_k_values(text)


def test_sweep_labels(tiny_dataset):
    rows = sweep(tiny_train_config(epochs=1), [1, 'adaptive'], [0.5], 1)
    assert [row.variant for row in rows] == ['k=1', 'k=adaptive',
                                             'lambda=0.5']
    assert all(row.s == 0.0 for row in rows)


def test_full_pipeline_gradients():
    results = check_full_pipeline()
    assert results
    assert all(result.passed for result in results), [
        (r.name, r.max_error) for r in results if not r.passed]


def test_full_pipeline_batch_needs_four_identities():
    assert (BATCH_P, BATCH_K) == (4, 2)
    with pytest.raises(ContractError):
        check_full_pipeline(config=tiny_encoder_config(num_classes=3))


@pytest.mark.parametrize('branch', [LocalBranch.NONE, LocalBranch.RNN])
def test_full_pipeline_gradients_other_branches(branch):
    assert all(result.passed for result in check_full_pipeline(branch=branch))


def desk_scale_rows(name, seeds=(0, 1, 2), levels=(0.0, 0.3, 0.6)):
    base = variant_config(TrainConfig(progress=False), name)
    dataset = generate_from_config(base.data, base.encoder.input_shape)
    rows = []
    for seed in seeds:
        result = train(base.replace(seed=seed), dataset)
        rows.extend(evaluate_model(result.model, dataset, levels,
                                   variant=name, seed=seed))
    return rows


def mean_at(rows, s, attr='rank1'):
    return float(np.mean([getattr(r, attr) for r in rows if r.s == s]))


@pytest.mark.slow
def test_desk_scale_retrieval_and_occlusion_trend():
    rows = desk_scale_rows('RNLSTM_A')
    assert mean_at(rows, 0.0) >= 0.95
    assert mean_at(rows, 0.0, 'map') >= 0.90
    assert mean_at(rows, 0.0) + 0.02 >= mean_at(rows, 0.3)
    assert mean_at(rows, 0.3) + 0.02 >= mean_at(rows, 0.6)


@pytest.mark.slow
def test_desk_scale_joint_loss_beats_softmax_under_occlusion():
    joint = desk_scale_rows('RNLSTM_A', levels=(0.3,))
    softmax = desk_scale_rows('RNLSTM_S', levels=(0.3,))
    assert mean_at(joint, 0.3) >= mean_at(softmax, 0.3)


def test_every_variant_trains_one_step(tiny_dataset):
    for name in VARIANTS:
        config = variant_config(tiny_train_config(epochs=1,
                                                  steps_per_epoch=1), name)
        result = train(config, tiny_dataset)
        assert math.isfinite(result.log.final_loss), name
