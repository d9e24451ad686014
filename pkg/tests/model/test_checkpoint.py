import numpy as np
import pytest
import yaml

from src.model import CheckpointError, build_model, load_checkpoint, save_checkpoint


def test_checkpoint_round_trip(tmp_path, micro_config, token_batch):
    model = build_model(micro_config(strategy="cycle_rev", tie_embeddings=False, admin=True), seed=3,
                        dtype=np.float64)
    model.store.parameters()["enc.block1.ffn.b1"].data[...] = 0.25
    save_checkpoint(model, tmp_path / "ckpt", step=42)

    loaded = load_checkpoint(tmp_path / "ckpt")
    src, tgt_in, _ = token_batch
    assert loaded.config == model.config
    assert loaded.dtype == np.float64
    assert loaded.enc_assignment == model.enc_assignment
    for name, tensor in model.named_parameters():
        np.testing.assert_array_equal(loaded.store.parameters()[name].data, tensor.data)
    np.testing.assert_array_equal(loaded.forward(src, tgt_in).data, model.forward(src, tgt_in).data)


def test_manifest_records_plans_and_step(tmp_path, micro_config):
    save_checkpoint(build_model(micro_config(), seed=1), tmp_path, step=7)
    manifest = yaml.safe_load((tmp_path / "checkpoint.yaml").read_text())
    assert manifest["step"] == 7
    assert manifest["enc_assignment"]["blocks"] == [1, 2, 1, 2]
    assert (tmp_path / "tensors" / "embedding.txt").is_file()


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nowhere")


def test_truncated_tensor_dump(tmp_path, micro_config):
    save_checkpoint(build_model(micro_config(), seed=1), tmp_path)
    (tmp_path / "tensors" / "embedding.txt").write_text("shape: 11 8\n0.5\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path)


def test_plan_that_disagrees_with_config(tmp_path, micro_config):
    save_checkpoint(build_model(micro_config(), seed=1), tmp_path)
    path = tmp_path / "checkpoint.yaml"
    manifest = yaml.safe_load(path.read_text())
    manifest["enc_assignment"]["blocks"] = [1, 1, 2, 2]
    manifest["enc_assignment"]["strategy"] = "sequence"
    path.write_text(yaml.safe_dump(manifest))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path)
