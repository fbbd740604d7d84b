import pytest

from decent.certs import verify_chain
from decent.errors import LaVerifyFailed, SelfAttestFailed
from decent.testbed import Testbed


@pytest.fixture
def tb():
    return Testbed(seed=3)


def test_sa_cert_binds_key_to_report(tb):
    srv = tb.server("p0")
    sa = srv.sa_cert
    assert sa.signature_valid()
    assert sa.ias_report.verify(tb.ias.public_key)
    assert sa.ias_report.report_data[:32] == srv.keypair.fingerprint
    assert sa.not_after - sa.not_before == pytest.approx(srv.lifetime)


def test_refresh_keeps_key_and_extends_validity(tb):
    srv = tb.server("p0")
    old = srv.sa_cert
    assert not srv.refresh_due()
    tb.clock.advance(srv.lifetime * 0.6)
    assert srv.maybe_refresh()
    assert srv.sa_cert.server_public_key == old.server_public_key
    assert srv.sa_cert.not_after > old.not_after


def test_refresh_failure_stops_issuing(tb):
    srv = tb.server("p0")
    tb.ias.revoke_platform("p0")
    with pytest.raises(SelfAttestFailed):
        srv.refresh()
    assert not srv.serving
    with pytest.raises(SelfAttestFailed):
        tb.component("AppA", tb.authlist(("AppA", "A")), "p0")


def test_local_attestation_issues_verifiable_chain(tb):
    al = tb.authlist(("AppA", "A"))
    ctx = tb.component("AppA", al, "p0")
    verify_chain(ctx.chain, local_authlist=al, expected_service="A", authority_key=tb.ias.public_key, now=tb.clock.now())
    assert ctx.chain.component.authlist_bytes == al.encode()
    assert tb.servers["p0"].issued[-1] == ctx.chain.component


@pytest.mark.parametrize("step", [1, 2, 3, 4])
def test_local_attestation_tamper_detected(tb, step):
    al = tb.authlist(("AppA", "A"))

    def tamper(direction, s, msg):
        if s == step:
            i = len(msg) // 2
            return msg[:i] + bytes([msg[i] ^ 1]) + msg[i + 1:]
        return msg

    with pytest.raises(Exception) as exc:
        tb.component("AppA", al, "p0", tamper=tamper)
    assert not isinstance(exc.value, AssertionError)


def test_local_attestation_across_platforms_fails(tb):
    from decent.component import component_init
    from decent.platform import enclave_code

    al = tb.authlist(("AppA", "A"))
    tb.platform("p1")
    enclave = tb.platform("p0").load_enclave(enclave_code("AppA"))
    with pytest.raises(LaVerifyFailed):
        component_init(enclave, al, tb.servers["p1"])


def test_dropped_la_message(tb):
    with pytest.raises(LaVerifyFailed):
        tb.component("AppA", tb.authlist(("AppA", "A")), "p0", tamper=lambda d, s, m: None)
