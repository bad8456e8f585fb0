"""Network helpers for fetching the public SNIPS benchmark files."""

import logging
import os
from typing import Optional

import requests
# For use by callers
from requests import exceptions  # noqa: F401

from intentspace import __version__ as ver
from intentspace.data import SNIPS_SUBDIR

USER_AGENT = 'intentspace/' + ver

# Seconds to wait for response
TIMEOUT = 30

# Raw file location of the benchmark repository
SNIPS_BASE_URL = ('https://raw.githubusercontent.com/sonos/nlu-benchmark/master/'
                  + SNIPS_SUBDIR + '/{intent}/{name}')

SNIPS_INTENTS = ('AddToPlaylist', 'BookRestaurant', 'GetWeather', 'PlayMusic', 'RateBook',
                 'SearchCreativeWork', 'SearchScreeningEvent')


class Session(requests.Session):
    """Set up a requests session with a standard configuration."""

    def __init__(self, total: int = 5, backoff_factor: int = 2,
                 status_forcelist: Optional[list[int]] = None):
        super().__init__()
        if not status_forcelist:
            status_forcelist = [429, 500, 502, 503, 504]

        # This delays a total of 2+4+8+16+32 seconds before aborting, by default
        retry_strategy = requests.adapters.Retry(
            total=total, backoff_factor=backoff_factor, status_forcelist=status_forcelist,
            allowed_methods=['HEAD', 'GET'])
        adapter = requests.adapters.HTTPAdapter(max_retries=retry_strategy)
        self.mount('https://', adapter)
        self.mount('http://', adapter)
        self.headers.update({'User-Agent': USER_AGENT})


def snips_files(intent: str) -> list[str]:
    return [f'train_{intent}_full.json', f'validate_{intent}.json']


def fetch_snips(dest: str, session: Optional[Session] = None,
                intents: tuple[str, ...] = SNIPS_INTENTS) -> str:
    """Download the per-intent train and validate files into dest.

    Files already present are not downloaded again.

    Returns:
        the directory holding the per-intent sub-directories, suitable for data.load_snips()
    """
    req = session or Session()
    base = os.path.join(dest, SNIPS_SUBDIR)
    for intent in intents:
        os.makedirs(os.path.join(base, intent), exist_ok=True)
        for name in snips_files(intent):
            path = os.path.join(base, intent, name)
            if os.path.exists(path):
                logging.debug('Already have %s', path)
                continue
            url = SNIPS_BASE_URL.format(intent=intent, name=name)
            logging.info('Downloading %s', url)
            resp = req.get(url, timeout=TIMEOUT)
            resp.raise_for_status()
            # Write via a temporary name so an interrupted download is retried next time
            with open(path + '.part', 'wb') as f:
                f.write(resp.content)
            os.replace(path + '.part', path)
    return base
