def bump_version(version: str, position: int = 2, pre_release: Optional[str] = None) -> str:
    ver_info = _build_version_info(version)
    position = _build_version_bump_position(position)
    bump_type = _build_version_bump_type(position, pre_release)
    hold: List[Union[int, str]] = []
    if bump_type == _BUMP_VERSION_MAJOR:
        hold = [ver_info.major.num + 1, 0]
    elif bump_type in _BUMP_VERSION_MINORS:
        if bump_type == _BUMP_VERSION_MINOR:
            if ver_info.minor.pre_txt:
                hold = [ver_info.major.num, ver_info.minor.num]
            else:
                hold = [ver_info.major.num, ver_info.minor.num + 1]
        else:
            if bump_type == _BUMP_VERSION_MINOR_ALPHA:
                if ver_info.minor.pre_txt == 'a':
                    part = '%sa%s' % (ver_info.minor.num, ver_info.minor.pre_num + 1)
                else:
                    part = '{}a0'.format(ver_info.minor.num + 1)
            else:
                if ver_info.minor.pre_txt == 'a':
                    part = '{}b0'.format(ver_info.minor.num)
                elif ver_info.minor.pre_txt == 'b':
                    part = '%sb%s' % (ver_info.minor.num, ver_info.minor.pre_num + 1)
                else:
                    part = '{}b0'.format(ver_info.minor.num + 1)
            hold = [ver_info.major.num, part]
    else:
        if bump_type == _BUMP_VERSION_PATCH:
            if ver_info.patch.pre_txt:
                hold = [ver_info.major.num, ver_info.minor.num, ver_info.patch.num]
            else:
                hold = [ver_info.major.num, ver_info.minor.num, ver_info.patch.num + 1]
        else:
            if bump_type == _BUMP_VERSION_PATCH_ALPHA:
                if ver_info.patch.pre_txt == 'a':
                    part = '%sa%s' % (ver_info.patch.num, ver_info.patch.pre_num + 1)
                else:
                    part = '{}a0'.format(ver_info.patch.num + 1)
            else:
                if ver_info.patch.pre_txt == 'a':
                    part = '{}b0'.format(ver_info.patch.num)

                elif ver_info.patch.pre_txt == 'b':
                    part = '%sb%s' % (ver_info.patch.num, ver_info.patch.pre_num + 1)
                else:
                    part = '{}b0'.format(ver_info.patch.num + 1)
            hold = [ver_info.major.num, ver_info.minor.num, part]
    out = '.'.join(map(str, hold))
    return out


from typing import List, NamedTuple, Optional, Union

from flutils_helpers import (
    _BUMP_VERSION_MAJOR,
    _BUMP_VERSION_MINOR,
    _BUMP_VERSION_MINOR_ALPHA,
    _BUMP_VERSION_MINORS,
    _BUMP_VERSION_PATCH,
    _BUMP_VERSION_PATCH_ALPHA,
    _build_version_bump_position,
    _build_version_bump_type,
)


def _build_version_info(version):
    parts = _parse_parts(version)
    return _VersionInfo(*parts)


def _parse_parts(version):
    return [p for p in version.split('.')]


class _VersionInfo(NamedTuple):
    major: object
    minor: object
    patch: object
