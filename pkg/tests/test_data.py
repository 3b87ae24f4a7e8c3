import numpy as np
import pytest

from amde.data import (
    DataConfig,
    Fill,
    IdentityDataset,
    OcclusionSpec,
    PKSpec,
    Split,
    erase_rectangle,
    generate_from_config,
    generate_synthetic,
    load_dataset,
    make_prototypes,
    occlude_images,
    pk_sample,
    random_erase,
    save_dataset,
    split_counts,
)
from amde.diffcore import Tensor
from amde.errors import ConfigError, ContractError, SamplingError
from amde.losses import AnnConfig, BatchEmbeddings, ann_loss
from amde.utils.rng import derive_rng, restore_rng, rng_state


def test_generate_counts():
    dataset = generate_synthetic(32, 20, 0.1, 0)
    assert len(dataset) == 640
    assert dataset.image_shape == (1, 64, 32)
    assert len(set(dataset.labels.tolist())) == 32
    assert dataset.identities(Split.QUERY) == list(range(32))
    assert dataset.identities(Split.GALLERY) == list(range(32))


def test_split_counts():
    assert split_counts(20, 0.2) == (4, 8, 8)
    assert split_counts(2, 0.2) == (1, 1, 0)
    assert split_counts(5, 1.0) == (3, 1, 1)
    assert split_counts(3, 0.9) == (1, 1, 1)
    assert split_counts(8, 0.0) == (1, 4, 3)


def test_zero_noise_gives_prototypes():
    dataset = generate_synthetic(4, 5, 0.0, 7, shape=(1, 16, 8))
    prototypes = make_prototypes(4, (1, 16, 8), 7)
    for image, label in zip(dataset.images, dataset.labels):
        np.testing.assert_array_equal(image, prototypes[label])


def test_prototypes_differ_between_identities():
    prototypes = make_prototypes(5, (1, 16, 8), 0)
    for a in range(5):
        for b in range(a + 1, 5):
            assert not np.allclose(prototypes[a], prototypes[b])


def test_generation_is_deterministic():
    first = generate_synthetic(4, 6, 0.1, 3, shape=(1, 16, 8))
    second = generate_synthetic(4, 6, 0.1, 3, shape=(1, 16, 8))
    other = generate_synthetic(4, 6, 0.1, 4, shape=(1, 16, 8))
    assert first.images.tobytes() == second.images.tobytes()
    assert first.splits == second.splits
    assert not np.array_equal(first.images, other.images)


@pytest.mark.parametrize('num_ids, per_id', [(1, 5), (5, 1)])
def test_generate_rejects_degenerate_counts(num_ids, per_id):
    with pytest.raises(ContractError):
        generate_synthetic(num_ids, per_id, 0.1, 0)


def test_three_images_keep_a_training_image():
    dataset = generate_synthetic(4, 3, 0.1, 0, shape=(1, 16, 8))
    assert dataset.identities(Split.TRAIN) == [0, 1, 2, 3]

    pairs = generate_synthetic(4, 2, 0.1, 0, shape=(1, 16, 8))
    assert pairs.identities(Split.TRAIN) == []


def test_generate_from_config():
    config = DataConfig(num_ids=3, imgs_per_id=4, seed=2)
    dataset = generate_from_config(config, (1, 16, 8))
    assert dataset.config == config
    assert dataset.seed == 2
    assert len(dataset) == 12


@pytest.mark.parametrize('data', [{'num_ids': 1}, {'query_fraction': 1.5},
                                  {'noise_sigma': -0.1}, {'seeds': 1}])
def test_data_config_validation(data):
    with pytest.raises(ConfigError):
        DataConfig.unmarshal(data)


def test_dataset_requires_gallery_for_queries():
    images = np.zeros((2, 1, 2, 2))
    with pytest.raises(ContractError):
        IdentityDataset(images, [0, 1], [Split.QUERY, Split.GALLERY], 0)


def test_subset_and_groups(tiny_dataset):
    images, labels = tiny_dataset.subset(Split.TRAIN)
    assert len(images) == len(labels) == 6 * 3
    groups = tiny_dataset.indices_by_label(Split.QUERY)
    assert sorted(groups) == list(range(6))
    for label, indices in groups.items():
        assert all(tiny_dataset.labels[i] == label for i in indices)
        assert all(tiny_dataset.splits[i] is Split.QUERY for i in indices)


def test_pk_batch_counts(tiny_dataset, rng):
    spec = PKSpec(p=3, k=4)
    batch = pk_sample(tiny_dataset, spec, rng)
    assert len(batch) == spec.batch_size == 12
    _, counts = np.unique(batch.labels, return_counts=True)
    assert counts.tolist() == [4, 4, 4]
    assert all(tiny_dataset.splits[i] is Split.TRAIN for i in batch.indices)
    np.testing.assert_array_equal(batch.images,
                                  tiny_dataset.images[batch.indices])


def test_minimal_pk_batch_satisfies_metric_loss(tiny_dataset, rng):
    batch = pk_sample(tiny_dataset, PKSpec(p=2, k=2), rng)
    embeddings = Tensor(batch.images.reshape(4, -1))
    logits = Tensor(np.zeros((4, 6)))
    loss = ann_loss(BatchEmbeddings(embeddings, logits, batch.labels),
                    AnnConfig())
    assert loss.item() >= 0.0


def test_pk_sample_covers_every_identity():
    dataset = generate_synthetic(10, 6, 0.1, 0, shape=(1, 16, 8))
    rng = derive_rng(0, 99)
    seen = set()
    for _ in range(1000):
        seen.update(pk_sample(dataset, PKSpec(p=2, k=2), rng).labels.tolist())
    assert seen == set(range(10))


def test_pk_sample_needs_enough_identities(tiny_dataset, rng):
    with pytest.raises(SamplingError):
        pk_sample(tiny_dataset, PKSpec(p=7, k=2), rng)


def test_pk_sample_is_deterministic(tiny_dataset):
    first = pk_sample(tiny_dataset, PKSpec(p=3, k=2), derive_rng(1, 2))
    second = pk_sample(tiny_dataset, PKSpec(p=3, k=2), derive_rng(1, 2))
    np.testing.assert_array_equal(first.indices, second.indices)


def test_pk_spec_json_keys():
    spec = PKSpec.unmarshal({'P': 4, 'K': 3})
    assert (spec.p, spec.k, spec.batch_size) == (4, 3, 12)
    assert spec.to_dict() == {'P': 4, 'K': 3}
    with pytest.raises(ConfigError):
        PKSpec.unmarshal({'P': 1})


def test_rng_state_round_trip():
    rng = derive_rng(5, 1)
    rng.normal(size=3)
    restored = restore_rng(rng_state(rng))
    np.testing.assert_array_equal(rng.normal(size=4), restored.normal(size=4))


def test_erase_zero_is_identity(rng):
    image = rng.uniform(size=(1, 32, 16))
    erased = random_erase(image, OcclusionSpec(s=0.0), rng)
    np.testing.assert_array_equal(erased, image)
    assert erased is not image


def test_erase_everything(rng):
    image = rng.uniform(size=(2, 32, 16))
    spec = OcclusionSpec(s=1.0, fill=Fill.CONSTANT, fill_value=-1.0)
    np.testing.assert_array_equal(random_erase(image, spec, rng),
                                  np.full(image.shape, -1.0))


def test_erase_half_changes_expected_pixels():
    image = np.random.default_rng(0).uniform(size=(1, 32, 16))
    spec = OcclusionSpec(s=0.5, fill=Fill.CONSTANT, fill_value=-1.0)
    for seed in range(20):
        erased = random_erase(image, spec, derive_rng(seed))
        assert np.count_nonzero(erased != image) == 256


def test_erase_stays_inside_rectangle(rng):
    image = rng.uniform(size=(1, 32, 16))
    spec = OcclusionSpec(s=0.3, fill=Fill.CONSTANT, fill_value=-1.0)
    erased = random_erase(image, spec, derive_rng(3))
    rows, cols = np.nonzero(erased[0] != image[0])
    box = (rows.max() - rows.min() + 1) * (cols.max() - cols.min() + 1)
    assert box == rows.size
    assert abs(rows.size - round(0.3 * 512)) <= 32


def test_erase_rectangle_area():
    for s in np.linspace(0.05, 1.0, 20):
        top, left, h, w = erase_rectangle(32, 16, s, derive_rng(1))
        assert abs(h * w - round(s * 512)) <= 32
        assert 0 <= top <= 32 - h and 0 <= left <= 16 - w
    assert erase_rectangle(32, 16, 0.0001, derive_rng(1)) is None


def test_uniform_fill_within_image_range(rng):
    image = rng.uniform(2.0, 3.0, size=(1, 16, 8))
    erased = random_erase(image, OcclusionSpec(s=0.5), rng)
    assert erased.min() >= image.min() and erased.max() <= image.max()


@pytest.mark.parametrize('s', [-0.1, 1.5])
def test_erase_rejects_bad_fraction(s, rng):
    with pytest.raises(ContractError):
        random_erase(np.zeros((1, 4, 4)), OcclusionSpec(s=s), rng)


def test_occlude_images_is_order_independent(rng):
    images = rng.uniform(size=(5, 1, 16, 8))
    spec = OcclusionSpec(s=0.4, seed=11)
    batch = occlude_images(images, spec)
    for i in range(5):
        expected = random_erase(images[i], spec, derive_rng(11, i))
        np.testing.assert_array_equal(batch[i], expected)
    np.testing.assert_array_equal(occlude_images(images, spec), batch)


def test_storage_round_trip(tmp_path, tiny_dataset):
    save_dataset(tiny_dataset, tmp_path)
    assert (tmp_path / 'meta.json').exists()
    assert (tmp_path / '0_0.bin').exists()

    loaded = load_dataset(tmp_path)
    assert loaded.images.tobytes() == tiny_dataset.images.tobytes()
    np.testing.assert_array_equal(loaded.labels, tiny_dataset.labels)
    assert loaded.splits == tiny_dataset.splits
    assert loaded.seed == tiny_dataset.seed
    assert loaded.config == tiny_dataset.config


def test_storage_detects_missing_file(tmp_path, tiny_dataset):
    save_dataset(tiny_dataset, tmp_path)
    (tmp_path / '2_3.bin').unlink()
    with pytest.raises(ContractError):
        load_dataset(tmp_path)


def test_storage_detects_truncated_file(tmp_path, tiny_dataset):
    save_dataset(tiny_dataset, tmp_path)
    path = tmp_path / '1_1.bin'
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ContractError):
        load_dataset(tmp_path)
