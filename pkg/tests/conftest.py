def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import acceptance_report

    if not acceptance_report.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(acceptance_report.RESULTS):
        word = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{num:2d}. {word}  {title}: {detail}")
