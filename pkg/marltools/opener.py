"""
File access through fsspec, so that configs, checkpoints and results
can live on a local disk or behind any fsspec protocol
(`memory://`, `s3://`, ...).
"""
import os
import posixpath
from os import PathLike

import fsspec


def stringify_path(filename):
    """Ensure that the input is a str or a file-like object"""
    if isinstance(filename, PathLike):
        return filename.__fspath__()
    return filename


def join(base, *parts):
    """Join path components, keeping the protocol of `base`"""
    base = stringify_path(base)
    protocol, sep, path = base.rpartition('://')
    if not sep:
        return os.path.join(base, *parts)
    return f'{protocol}://{posixpath.join(path, *parts)}'


def makedirs(path):
    """Create a directory (and its parents) if it does not exist"""
    fs, root = fsspec.core.url_to_fs(stringify_path(path))
    fs.makedirs(root, exist_ok=True)
    return path


class open:

    def __init__(self, fileobj, mode='rb', newline=None):
        """
        Open a file from a path or url

        Parameters
        ----------
        fileobj : str or PathLike
            Local path or fsspec url
        mode : str
            Opening mode
        newline : str, optional
            Passed to the text wrapper in text mode.

        Returns
        -------
        fileobj
            Opened file
        """
        self.fileobj = fileobj
        self.mode = mode
        self.newline = newline
        self.fileobjs = []
        self._is_inside = False

    def __enter__(self):
        if not self._is_inside:
            self._is_inside = True
            return self._open()
        return self.fileobjs[-1]

    def __exit__(self, type=None, value=None, traceback=None):
        for fileobj in reversed(self.fileobjs):
            fileobj.close()
        self.fileobjs = []
        self._is_inside = False

    def __del__(self):
        self.__exit__()

    def open(self):
        return self.__enter__()

    def close(self):
        return self.__exit__()

    def _open(self):
        return self.fsspec_open(stringify_path(self.fileobj))

    def fsspec_open(self, fileobj):
        opt = {}
        if 'b' not in self.mode:
            opt['newline'] = self.newline
            opt['encoding'] = 'utf-8'
        fileobj = fsspec.open(fileobj, self.mode, **opt)
        self.fileobjs.append(fileobj)
        fileobj = fileobj.open()
        self.fileobjs.append(fileobj)
        return fileobj
