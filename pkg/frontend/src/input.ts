// Keyboard mapping per the session instructions: Enter starts an
// episode; Space / a / d / w / s move the principal. Everything else is
// ignored, and no second message goes out while one is in flight.

import type { ClientMessage } from './protocol.js';
import type { ClientState } from './state.js';

const ACTION_KEYS: Record<string, 'Space' | 'a' | 'd' | 'w' | 's'> = {
	' ': 'Space',
	a: 'a',
	d: 'd',
	w: 'w',
	s: 's',
};

export function messageForKey(key: string, state: ClientState): ClientMessage | null {
	if (state.connection !== 'open' || state.error || state.inFlight) return null;
	if (key === 'Enter') {
		return state.phase === 'awaiting-start' ? { type: 'start_episode' } : null;
	}
	const action = ACTION_KEYS[key];
	if (action && state.phase === 'in-episode') {
		return { type: 'action', key: action };
	}
	return null;
}
