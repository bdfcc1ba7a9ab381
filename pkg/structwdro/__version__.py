from importlib.metadata import PackageNotFoundError, version


def get_version():
    try:
        return version("structwdro")
    except PackageNotFoundError:
        # running from a source tree that was not installed
        return "0+unknown"
