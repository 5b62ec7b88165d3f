def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        word = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {word}: {name}")
