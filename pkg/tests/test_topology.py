import networkx as nx
import pytest

from matpipe import topology as topo


def degrees(net):
    return {d: len(net.neighbors(d)) for d in net.devices}


def test_fat_tree_4_counts_and_structure():
    net = topo.fat_tree(4)
    assert net.switch_count() == 20  # 4 core + 16 pod switches
    assert net.device_count() == 20
    deg = degrees(net)
    cores = [d for d in net.devices if d.startswith("core")]
    assert len(cores) == 4
    assert all(deg[c] == 4 for c in cores)  # one agg per pod
    edges = [d for d in net.devices if d.startswith("edge")]
    assert len(edges) == 8 and all(deg[e] == 2 for e in edges)
    assert len(net.hosts) == 8
    assert all(net.devices[dev].edge for dev in net.hosts.values())


def test_fat_tree_switch_count_formula():
    for k in (4, 6, 8, 12):
        assert topo.fat_tree(k).switch_count() == 5 * k * k // 4


def test_fat_tree_odd_k_rejected():
    with pytest.raises(topo.TopologyError, match="even"):
        topo.fat_tree(3)


def test_dcell_counts_and_degrees():
    net = topo.dcell(3, 1)
    servers = [d for d, i in net.devices.items() if not i.programmable]
    switches = [d for d, i in net.devices.items() if i.programmable]
    assert len(servers) == 12 and len(switches) == 4
    deg = degrees(net)
    assert all(deg[s] == 2 for s in servers)  # own switch + one level link
    assert all(deg[s] == 3 for s in switches)
    big = topo.dcell(3, 2)
    assert sum(1 for i in big.devices.values() if not i.programmable) == 156
    assert big.switch_count() == 52
    deg = degrees(big)
    assert all(
        deg[d] == 3 for d, i in big.devices.items() if not i.programmable
    )


def test_bcube_counts_and_degrees():
    net = topo.bcube(4, 1)
    servers = [d for d, i in net.devices.items() if not i.programmable]
    switches = [d for d, i in net.devices.items() if i.programmable]
    assert len(servers) == 16 and len(switches) == 8
    deg = degrees(net)
    assert all(deg[s] == 2 for s in servers)  # one switch per level
    assert all(deg[s] == 4 for s in switches)  # n ports
    assert topo.bcube(5, 2).switch_count() == 3 * 25


def test_jellyfish_regular_and_seeded():
    net = topo.jellyfish(80, 3, seed=11)
    assert net.switch_count() == 80
    assert all(v == 3 for v in degrees(net).values())
    again = topo.jellyfish(80, 3, seed=11)
    assert again.links == net.links
    other = topo.jellyfish(80, 3, seed=12)
    assert other.links != net.links
    with pytest.raises(topo.TopologyError, match="d < n"):
        topo.jellyfish(3, 4)


def test_generate_dispatch_and_errors():
    net = topo.generate("fat_tree", k=4)
    assert net.kind == "fat_tree"
    jf = topo.generate("jellyfish", seed=5, n=10, d=3)
    assert jf.params["seed"] == 5
    with pytest.raises(topo.TopologyError, match="unknown topology"):
        topo.generate("torus", k=3)
    with pytest.raises(topo.TopologyError, match="bad parameters"):
        topo.generate("fat_tree", pods=4)


def line_net():
    devs = [topo.DeviceInfo("A"), topo.DeviceInfo("B"), topo.DeviceInfo("C")]
    return topo.custom_network(
        devs, [("A", "B"), ("B", "C")], {"hsrc": "A", "hdst": "C"}
    )


def test_line_single_path():
    ps = topo.enumerate_paths(line_net(), "hsrc", "hdst")
    assert ps.paths == (("A", "B", "C"),)
    assert (ps.src_device, ps.dst_device) == ("A", "C")


def test_parallel_pair_short_path_first():
    devs = [topo.DeviceInfo(d) for d in ("A", "B", "C", "D")]
    links = [("A", "B"), ("B", "D"), ("A", "C"), ("C", "D"), ("A", "D")]
    net = topo.custom_network(devs, links, {"s": "A", "t": "D"})
    ps = topo.enumerate_paths(net, "s", "t")
    assert ps.paths == (("A", "D"), ("A", "B", "D"), ("A", "C", "D"))


def test_same_device_hosts_single_trivial_path():
    devs = [topo.DeviceInfo("A"), topo.DeviceInfo("B")]
    net = topo.custom_network(devs, [("A", "B")], {"x": "A", "y": "A"})
    ps = topo.enumerate_paths(net, "x", "y")
    assert ps.paths == (("A",),)


def test_path_enumeration_matches_brute_force_on_fat_tree():
    net = topo.fat_tree(4)
    g = nx.Graph(list(net.links))
    src, dst = "h000_000", "h001_000"
    ps = topo.enumerate_paths(net, src, dst, limit=16)
    a, b = net.hosts[src], net.hosts[dst]
    everything = sorted(
        (tuple(p) for p in nx.all_simple_paths(g, a, b)), key=lambda p: (len(p), p)
    )
    assert list(ps.paths) == everything[:16]
    # All four shortest go through distinct cores.
    shortest = [p for p in ps.paths if len(p) == 5]
    assert len(shortest) == 4
    assert len({p[2] for p in shortest}) == 4
    assert all(p[2].startswith("core") for p in shortest)


def test_enumeration_limits():
    net = topo.fat_tree(4)
    ps = topo.enumerate_paths(net, "h000_000", "h001_000", limit=3)
    assert len(ps.paths) == 3
    capped = topo.enumerate_paths(net, "h000_000", "h001_000", limit=64, max_len=5)
    assert all(len(p) <= 5 for p in capped.paths)
    with pytest.raises(topo.TopologyError, match="no path"):
        topo.enumerate_paths(net, "h000_000", "h001_000", max_len=2)
    with pytest.raises(topo.TopologyError, match="unknown host"):
        topo.enumerate_paths(net, "h000_000", "nope")
    with pytest.raises(topo.TopologyError, match="distinct"):
        topo.enumerate_paths(net, "h000_000", "h000_000")


def test_disconnected_network_rejected():
    devs = [topo.DeviceInfo("A"), topo.DeviceInfo("B"), topo.DeviceInfo("C")]
    with pytest.raises(topo.TopologyError, match="not connected"):
        topo.custom_network(devs, [("A", "B")], {})


def test_network_file_round_trip(tmp_path):
    for net in (topo.fat_tree(4), topo.jellyfish(12, 3, seed=2), topo.dcell(2, 1)):
        path = tmp_path / ("%s.json" % net.kind)
        topo.save_network(net, path)
        again = topo.load_network(path)
        assert again == net
    bad = tmp_path / "bad.json"
    bad.write_text("{]")
    with pytest.raises(topo.TopologyError, match="not JSON"):
        topo.load_network(bad)
    bad.write_text('{"format_version": 99}')
    with pytest.raises(topo.TopologyError, match="format_version"):
        topo.load_network(bad)
