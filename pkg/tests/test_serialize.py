import numpy as np
import pytest

from rumnet.models import build_model
from rumnet.net import NetworkSpec, init_network
from rumnet.serialize import load_model, load_network, save_model, save_network
from test_models import perturb, random_event


class TestNetworkContainer:
    def test_roundtrip_bit_exact(self, tmp_path):
        net = init_network(NetworkSpec(4, 2, depth=2, width=5), np.random.default_rng(0))
        path = tmp_path / "net.bin"
        save_network(path, net)
        back = load_network(path)
        assert back.spec == net.spec
        for (w, b), (w2, b2) in zip(net.layers, back.layers):
            assert np.array_equal(w, w2) and np.array_equal(b, b2)

    def test_identical_bytes_across_saves(self, tmp_path):
        net = init_network(NetworkSpec(3, 1, depth=1, width=2), np.random.default_rng(1))
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_network(p1, net)
        save_network(p2, net)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_is_json_line(self, tmp_path):
        net = init_network(NetworkSpec(2, 1), np.random.default_rng(2))
        path = tmp_path / "net.bin"
        save_network(path, net)
        header = path.read_bytes().split(b"\n", 1)[0]
        import json
        manifest = json.loads(header)
        assert manifest["format"] == "rumnet-net-v1"
        assert manifest["input_dim"] == 2

    def test_truncated_payload_rejected(self, tmp_path):
        net = init_network(NetworkSpec(3, 2), np.random.default_rng(3))
        path = tmp_path / "net.bin"
        save_network(path, net)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_network(path)

    def test_wrong_format_tag(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b'{"format":"something-else"}\n')
        with pytest.raises(ValueError, match="expected format"):
            load_network(path)


class TestModelContainer:
    @pytest.mark.parametrize("kind", ["mnl", "tastenet", "deepmnl", "rumnet", "vnn"])
    def test_roundtrip_probabilities_identical(self, tmp_path, kind):
        model = build_model(kind, 3, 2, np.random.default_rng(4), depth=2,
                            width=4, K=2, d_eps=2, d_nu=2, n=4)
        perturb(model, 5)
        path = tmp_path / "model.bin"
        save_model(path, model)
        back = load_model(path)
        assert back.kind == model.kind
        for seed in range(5):
            event = random_event(3, 2, 4, seed=seed)
            np.testing.assert_array_equal(back.probabilities(event),
                                          model.probabilities(event))

    def test_rumnet_preserves_sample_structure(self, tmp_path):
        model = build_model("rumnet", 3, 0, np.random.default_rng(6), depth=1,
                            width=3, K=3, d_eps=2, d_nu=1)
        path = tmp_path / "m.bin"
        save_model(path, model)
        back = load_model(path)
        assert back.K == 3 and back.d_eps == 2 and back.d_nu == 1
        event = random_event(3, 0, 4, seed=9)
        np.testing.assert_array_equal(back.utilities(event), model.utilities(event))

    def test_vnn_keeps_cardinality(self, tmp_path):
        model = build_model("vnn", 2, 1, np.random.default_rng(7), depth=1,
                            width=3, n=5)
        path = tmp_path / "m.bin"
        save_model(path, model)
        assert load_model(path).n == 5
