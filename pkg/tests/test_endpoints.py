import ipaddress

import pytest
from hypothesis import given, strategies as st

from lanlens.endpoints import (
    CONTROL_PORTS,
    DnsIndex,
    EndpointInfo,
    ListDatabases,
    PublicSuffixList,
    SniIndex,
    detect_control_platforms,
    is_tracker,
    load_databases,
    load_public_suffix_list,
    resolve_endpoint,
)
from lanlens.flows import FlowKey, FlowWindow
from lanlens.traffic import DnsObservation


# ---------------------------------------------------------------- PSL oracle

def oracle_registered_domain(rules_text, hostname):
    """Independent public-suffix reduction, written directly from the
    published matching rules: enumerate every rule that matches, prefer
    exceptions, then the longest rule, then the implicit "*" rule."""
    rules = []
    for line in rules_text.splitlines():
        line = line.strip()
        if not line or line.startswith("//"):
            continue
        kind = "exception" if line.startswith("!") else "normal"
        rules.append((kind, line.lstrip("!").lower().split(".")))

    host = hostname.strip().rstrip(".").lower()
    if not host or "." not in host or any(not p for p in host.split(".")):
        return None
    try:
        ipaddress.ip_address(host)
        return None
    except ValueError:
        pass
    labels = host.split(".")

    def matches(rule_labels):
        if len(labels) < len(rule_labels):
            return False
        for rule_lab, dom_lab in zip(reversed(rule_labels), reversed(labels)):
            if rule_lab != "*" and rule_lab != dom_lab:
                return False
        return True

    matching = [(kind, rl) for kind, rl in rules if matches(rl)]
    exceptions = [rl for kind, rl in matching if kind == "exception"]
    if exceptions:
        suffix_len = max(len(rl) for rl in exceptions) - 1
    elif matching:
        suffix_len = max(len(rl) for _, rl in matching)
    else:
        suffix_len = 1
    if suffix_len + 1 > len(labels):
        return None
    return ".".join(labels[-(suffix_len + 1):])


from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "lanlens" / "data"
SNAPSHOT = (DATA_DIR / "public_suffix_snapshot.dat").read_text()


@pytest.fixture(scope="module")
def psl():
    return load_public_suffix_list()


@pytest.fixture(scope="module")
def dbs():
    return load_databases()


REDUCTION_VECTORS = [
    # hostname, expected registered domain
    ("example.COM", "example.com"),
    ("WwW.example.COM", "example.com"),
    ("example.com.", "example.com"),
    ("b.example.co.uk", "example.co.uk"),
    ("a.b.example.co.uk", "example.co.uk"),
    ("example.uk", "example.uk"),
    ("co.uk", None),
    ("test.ck", None),
    ("b.test.ck", "b.test.ck"),
    ("a.b.test.ck", "b.test.ck"),
    ("www.ck", "www.ck"),
    ("www.www.ck", "www.ck"),
    ("c.bd", None),
    ("b.c.bd", "b.c.bd"),
    ("a.b.c.bd", "b.c.bd"),
    ("test.kawasaki.jp", None),
    ("b.test.kawasaki.jp", "b.test.kawasaki.jp"),
    ("city.kawasaki.jp", "city.kawasaki.jp"),
    ("www.city.kawasaki.jp", "city.kawasaki.jp"),
    ("kawasaki.jp", "kawasaki.jp"),
    ("example.example", "example.example"),
    ("b.example.example", "example.example"),
    ("blogspot.com", None),
    ("myblog.blogspot.com", "myblog.blogspot.com"),
    ("www.myblog.blogspot.com", "myblog.blogspot.com"),
    ("github.io", None),
    ("pages.github.io", "pages.github.io"),
    ("project.pages.github.io", "pages.github.io"),
]


@pytest.mark.parametrize("hostname,expected", REDUCTION_VECTORS)
def test_registered_domain_vectors(psl, hostname, expected):
    assert psl.registered_domain(hostname) == expected
    assert oracle_registered_domain(SNAPSHOT, hostname) == expected


@pytest.mark.parametrize("hostname", ["com", "", ".", "10.1.2.3", "a..b", "localhost"])
def test_reduction_rejects_non_names(psl, hostname):
    assert psl.registered_domain(hostname) is None


LABEL = st.sampled_from(["www", "a", "api", "cdn", "test", "city", "b", "x9"])
TAIL = st.sampled_from([
    "com", "co.uk", "uk", "ck", "www.ck", "bd", "kawasaki.jp",
    "city.kawasaki.jp", "jp", "blogspot.com", "zz", "example.zz",
])


@given(st.lists(LABEL, min_size=0, max_size=3), TAIL)
def test_reduction_matches_oracle(labels, tail):
    host = ".".join(labels + [tail])
    assert PublicSuffixList(SNAPSHOT).registered_domain(host) == \
        oracle_registered_domain(SNAPSHOT, host)


def test_public_suffix_method(psl):
    assert psl.public_suffix("a.b.example.co.uk") == "co.uk"
    assert psl.public_suffix("b.test.ck") == "test.ck"
    assert psl.public_suffix("www.ck") == "ck"
    assert psl.public_suffix("foo.unknowntld") == "unknowntld"


# ------------------------------------------------------------- resolution

def obs(ip, name, device="aa", ts=100.0):
    return device, DnsObservation(device_mac="ignored", query_name=name,
                                  answers=(ip,), resolver_ip="192.168.1.1",
                                  timestamp=ts)


def make_indexes(*entries):
    dns = DnsIndex()
    for device, observation in entries:
        dns.observe(device, observation)
    return dns, SniIndex()


def test_precedence_dns_beats_everything(dbs):
    dns, sni = make_indexes(obs("31.13.64.35", "graph.facebook.com"))
    sni.add("aa", "31.13.64.35", "other.example.com", 200.0)
    info = resolve_endpoint("31.13.64.35", dns, sni, dbs, device_id="aa")
    assert info.hostname == "graph.facebook.com"
    assert info.resolution_source == "dns-answer"
    assert info.confident is True
    assert info.company == "Facebook"


def test_precedence_sni_then_passive_then_reverse(dbs):
    dns, sni = make_indexes()
    sni.add("aa", "1.2.3.4", "video.fbcdn.net", 10.0)
    by_sni = resolve_endpoint("1.2.3.4", dns, sni, dbs, device_id="aa")
    assert by_sni.resolution_source == "sni"
    assert by_sni.confident is True
    assert by_sni.company == "Facebook"

    by_passive = resolve_endpoint("8.8.8.8", dns, SniIndex(), dbs, device_id="aa")
    assert by_passive.hostname == "dns.google"
    assert by_passive.resolution_source == "passive-dns"
    assert by_passive.confident is False

    import dataclasses
    with_reverse = dataclasses.replace(
        dbs, passive_dns={}, reverse_dns=lambda ip: "ec2-1-2-3-4.compute.amazonaws.com")
    by_reverse = resolve_endpoint("1.2.3.4", dns, SniIndex(), with_reverse)
    assert by_reverse.resolution_source == "reverse-dns"
    assert by_reverse.confident is False
    assert by_reverse.company == "Amazon"


def test_unresolved_endpoint_keeps_ip_only(dbs):
    info = resolve_endpoint("198.18.0.9", DnsIndex(), SniIndex(), dbs)
    assert info.hostname is None
    assert info.resolution_source == "none"
    assert info.registered_domain is None
    assert info.company is None
    assert info.is_tracker is False
    assert info.confident is False


def test_ntp_service_guess_without_hostname(dbs):
    info = resolve_endpoint("17.253.14.125", DnsIndex(), SniIndex(),
                            ListDatabases(psl=dbs.psl, port_services=dbs.port_services),
                            port=123, transport="udp")
    assert info.hostname is None
    assert info.service_guess == "NTP time server"


def test_service_guess_alongside_hostname(dbs):
    dns, sni = make_indexes(obs("1.1.1.1", "mqtt.tuyaus.com"))
    info = resolve_endpoint("1.1.1.1", dns, sni, dbs, device_id="aa",
                            port=8883, transport="tcp")
    assert info.hostname == "mqtt.tuyaus.com"
    assert info.service_guess == "MQTT over TLS"
    assert info.company == "TuYa"


def test_per_device_history_wins_over_global(dbs):
    dns = DnsIndex()
    dns.observe("dev-a", DnsObservation("m", "a.example.com", ("5.6.7.8",), "r", 50.0))
    dns.observe("dev-b", DnsObservation("m", "b.example.com", ("5.6.7.8",), "r", 60.0))
    sni = SniIndex()
    # each device sees its own name for the shared IP
    assert resolve_endpoint("5.6.7.8", dns, sni, dbs, device_id="dev-a").hostname == "a.example.com"
    assert resolve_endpoint("5.6.7.8", dns, sni, dbs, device_id="dev-b").hostname == "b.example.com"
    # a device with no history falls back to the newest global observation
    assert resolve_endpoint("5.6.7.8", dns, sni, dbs, device_id="dev-c").hostname == "b.example.com"
    assert resolve_endpoint("5.6.7.8", dns, sni, dbs).hostname == "b.example.com"


def test_newest_observation_wins(dbs):
    dns = DnsIndex()
    dns.observe("d", DnsObservation("m", "old.example.com", ("9.9.9.9",), "r", 10.0))
    dns.observe("d", DnsObservation("m", "new.example.com", ("9.9.9.9",), "r", 20.0))
    assert resolve_endpoint("9.9.9.9", dns, SniIndex(), dbs, device_id="d").hostname == "new.example.com"


def test_country_lookup(dbs):
    assert dbs.country_for("8.8.8.8") == "US"
    assert dbs.country_for("198.51.100.77") == "GB"
    assert dbs.country_for("203.0.113.1") == "JP"
    assert dbs.country_for("198.18.0.1") is None


def test_country_longest_prefix_wins(psl):
    ranges = (
        (ipaddress.IPv4Network("10.1.2.0/24"), "DE"),
        (ipaddress.IPv4Network("10.0.0.0/8"), "US"),
    )
    db = ListDatabases(psl=psl, country_ranges=ranges)
    assert db.country_for("10.1.2.3") == "DE"
    assert db.country_for("10.9.9.9") == "US"


def test_resolution_is_pure(dbs):
    dns, sni = make_indexes(obs("2.2.2.2", "cdn.example.com"))
    first = resolve_endpoint("2.2.2.2", dns, sni, dbs, device_id="aa", port=443)
    second = resolve_endpoint("2.2.2.2", dns, sni, dbs, device_id="aa", port=443)
    assert first == second


# ---------------------------------------------------------------- trackers

def test_tracker_by_subdomain(dbs):
    assert is_tracker("ads.doubleclick.net", dbs) is True
    assert is_tracker("doubleclick.net", dbs) is True
    assert is_tracker("www.example.com", dbs) is False


def test_tracker_reduction_under_multi_label_suffix(psl):
    db = ListDatabases(psl=psl, tracker_domains=frozenset({"tracker.co.uk"}))
    assert is_tracker("sub.tracker.co.uk", db) is True
    assert is_tracker("a.b.sub.tracker.co.uk", db) is True
    assert is_tracker("tracker.co.uk", db) is True
    assert is_tracker("nottracker.co.uk", db) is False
    # oracle agreement for the same reduction
    assert oracle_registered_domain(SNAPSHOT, "sub.tracker.co.uk") == "tracker.co.uk"


def test_tracker_flag_in_endpoint_info(dbs):
    dns, sni = make_indexes(obs("3.3.3.3", "secure-us.imrworldwide.com"))
    info = resolve_endpoint("3.3.3.3", dns, sni, dbs, device_id="aa")
    assert info.is_tracker is True
    assert info.registered_domain == "imrworldwide.com"


def test_tracker_list_contents(dbs):
    for expected in ("doubleclick.net", "googlesyndication.com", "fwmrm.net",
                     "amazon-adsystem.com", "lgsmartad.com", "scorecardresearch.com"):
        assert expected in dbs.tracker_domains
    assert len(dbs.tracker_domains) >= 40


# ---------------------------------------------------- endpoint info invariants

def test_endpoint_info_rejects_inconsistent_fields(psl):
    with pytest.raises(ValueError):
        EndpointInfo("1.1.1.1", "x.com", "none", "x.com", None, False, None, None, False)
    with pytest.raises(ValueError):
        EndpointInfo("1.1.1.1", "x.com", "sni", None, None, True, None, None, True)
    with pytest.raises(ValueError):
        EndpointInfo("1.1.1.1", "x.com", "sni", "x.com", None, False, None, None, False)
    with pytest.raises(ValueError):
        EndpointInfo("1.1.1.1", None, "telepathy", None, None, False, None, None, False)


# ---------------------------------------------------------- control platforms

def window(device, ip, port, transport="tcp", start=0):
    key = FlowKey(device_id=device, remote_ip=ip, remote_port=port, transport=transport)
    return FlowWindow(key=key, window_start=start, bytes_sent=100, bytes_received=50,
                      first_packet_ts=float(start))


def test_control_platform_grouping(dbs):
    dns = DnsIndex()
    dns.observe("plug-1", DnsObservation("m", "mqtt.tuyaus.com", ("47.1.1.1",), "r", 1.0))
    dns.observe("plug-2", DnsObservation("m", "broker.tuyaus.com", ("47.1.1.2",), "r", 2.0))
    dns.observe("cam-1", DnsObservation("m", "xmpp.xbcs.net", ("52.9.9.9",), "r", 3.0))
    labels = {
        "plug-1": ("plug", "TuYa"),
        "plug-2": ("plug", "Gosund"),
        "cam-1": ("camera", "Belkin"),
        "tv-1": ("tv", "Samsung"),
    }
    flows = [
        window("plug-1", "47.1.1.1", 8883),
        window("plug-2", "47.1.1.2", 1883),
        window("cam-1", "52.9.9.9", 5222),
        window("tv-1", "1.2.3.4", 443),        # not a control port
        window("ghost", "47.1.1.1", 8883),     # no label -> skipped
    ]
    platforms = detect_control_platforms(flows, labels, dns, SniIndex(), dbs)
    assert platforms == {
        "tuyaus.com": {("plug", "TuYa"), ("plug", "Gosund")},
        "xbcs.net": {("camera", "Belkin")},
    }


def test_control_platform_brute_force_twin(dbs):
    """Same grouping computed two independent ways over a 12-flow fixture."""
    dns = DnsIndex()
    hosts = {
        "10.0.0.1": "a.pubnub.com", "10.0.0.2": "b.pubnub.com",
        "10.0.0.3": "mq.tuyacn.com", "10.0.0.4": "x.xbcs.net",
    }
    for i, (ip, name) in enumerate(hosts.items()):
        for dev in ("d1", "d2", "d3"):
            dns.observe(dev, DnsObservation("m", name, (ip,), "r", float(i)))
    labels = {"d1": ("plug", "Belkin"), "d2": ("camera", "Wyze"), "d3": ("hub", "Samsung")}
    flows = []
    rotation = [(dev, ip, port)
                for dev in ("d1", "d2", "d3")
                for ip, port in zip(hosts, (1883, 8883, 5222, 5223))]
    for dev, ip, port in rotation:
        flows.append(window(dev, ip, port))

    expected: dict[str, set] = {}
    for dev, ip, port in rotation:  # brute force from the raw rotation
        if port in CONTROL_PORTS and dev in labels:
            domain = oracle_registered_domain(SNAPSHOT, hosts[ip])
            expected.setdefault(domain, set()).add(labels[dev])

    assert detect_control_platforms(flows, labels, dns, SniIndex(), dbs) == expected


def test_control_ports_configurable(dbs):
    dns = DnsIndex()
    dns.observe("d", DnsObservation("m", "api.pubnub.com", ("10.0.0.9",), "r", 1.0))
    flows = [window("d", "10.0.0.9", 443)]
    labels = {"d": ("plug", "Belkin")}
    assert detect_control_platforms(flows, labels, dns, SniIndex(), dbs) == {}
    got = detect_control_platforms(flows, labels, dns, SniIndex(), dbs, ports=(443,))
    assert got == {"pubnub.com": {("plug", "Belkin")}}


def test_unresolved_platform_groups_by_ip(dbs):
    flows = [window("d", "198.18.5.5", 8883)]
    got = detect_control_platforms(flows, {"d": ("plug", "NoName")},
                                   DnsIndex(), SniIndex(), dbs)
    assert got == {"198.18.5.5": {("plug", "NoName")}}


def test_empty_flows_empty_result(dbs):
    assert detect_control_platforms([], {}, DnsIndex(), SniIndex(), dbs) == {}


# ------------------------------------------------------------------ loaders

def test_bundled_databases_load(dbs):
    assert dbs.domain_owners["fbcdn.net"] == "Facebook"
    assert dbs.domain_owners["xbcs.net"] == "Belkin"
    assert dbs.port_services[(123, "udp")] == "NTP time server"
    assert dbs.port_services[(8883, "tcp")] == "MQTT over TLS"
    assert dbs.passive_dns["8.8.8.8"] == "dns.google"
    assert dbs.reverse_dns is None


def test_load_databases_from_directory(tmp_path, dbs):
    import shutil
    for name in ("public_suffix_snapshot.dat", "tracker_domains.txt",
                 "domain_owners.csv", "port_services.csv",
                 "geo_countries.csv", "passive_dns_fixture.csv"):
        shutil.copy(DATA_DIR / name, tmp_path / name)
    again = load_databases(str(tmp_path))
    assert again.tracker_domains == dbs.tracker_domains
    assert again.domain_owners == dbs.domain_owners
