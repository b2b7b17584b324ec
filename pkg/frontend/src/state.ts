// Client-side session state: a pure reducer over server messages.
//
// The client keeps its own cumulative tally from step results so the UI
// can be checked against the server's episode summaries; any mismatch is
// surfaced as an error instead of silently trusting either side.

import type {
	EpisodeSummary,
	Mode,
	Phase,
	Scores,
	ServerMessage,
	StateFrame,
} from './protocol.js';
import { PROTOCOL_VERSION } from './protocol.js';

export interface ClientState {
	connection: 'connecting' | 'open' | 'closed';
	phase: Phase;
	mode: Mode;
	horizon: number;
	episode: number;
	step: number;
	targetFruit: string | null;
	frame: StateFrame | null;
	// Running tally recomputed client-side from step results.
	cumulative: Scores;
	episodeJoint: number;
	lastSummary: EpisodeSummary | null;
	practice: boolean;
	// True between sending a message and receiving its state frame.
	inFlight: boolean;
	error: string | null;
}

export function initialState(): ClientState {
	return {
		connection: 'connecting',
		phase: 'awaiting-start',
		mode: 'with-assistant',
		horizon: 10,
		episode: 0,
		step: 0,
		targetFruit: null,
		frame: null,
		cumulative: { episodes: 0, joint: 0, due_to_p: 0, due_to_a: 0 },
		episodeJoint: 0,
		lastSummary: null,
		practice: false,
		inFlight: false,
		error: null,
	};
}

function scoresEqual(a: Scores, b: Scores): boolean {
	return (
		a.episodes === b.episodes &&
		a.joint === b.joint &&
		a.due_to_p === b.due_to_p &&
		a.due_to_a === b.due_to_a
	);
}

function validFrame(msg: StateFrame): boolean {
	return (
		Array.isArray(msg.positions) &&
		msg.positions.length === 2 &&
		Array.isArray(msg.objects) &&
		msg.grid != null &&
		typeof msg.step === 'number'
	);
}

export function reduce(state: ClientState, msg: ServerMessage): ClientState {
	if (state.error) return state; // locked until reload
	if (msg.protocol !== PROTOCOL_VERSION) {
		return { ...state, error: `protocol mismatch: ${msg.protocol}`, inFlight: false };
	}
	switch (msg.type) {
		case 'hello':
			return {
				...state,
				connection: 'open',
				mode: msg.mode,
				horizon: msg.horizon,
			};
		case 'task_display':
			return {
				...state,
				phase: 'in-episode',
				episode: msg.episode,
				step: 0,
				targetFruit: msg.target_fruit,
				episodeJoint: 0,
			};
		case 'state_frame': {
			if (!validFrame(msg)) {
				return { ...state, error: 'malformed state frame', inFlight: false };
			}
			return { ...state, frame: msg, step: msg.step, inFlight: false };
		}
		case 'step_result': {
			if (state.practice) {
				return {
					...state,
					step: msg.step,
					episodeJoint: state.episodeJoint + msg.reward,
					phase: msg.done ? 'awaiting-start' : state.phase,
				};
			}
			const c = state.cumulative;
			const next: Scores = {
				episodes: c.episodes + (msg.done ? 1 : 0),
				joint: c.joint + msg.reward,
				due_to_p: c.due_to_p + msg.split[0],
				due_to_a: c.due_to_a + msg.split[1],
			};
			return {
				...state,
				step: msg.step,
				cumulative: next,
				episodeJoint: state.episodeJoint + msg.reward,
				phase: msg.done ? 'awaiting-start' : state.phase,
			};
		}
		case 'episode_summary': {
			if (!msg.practice && !scoresEqual(msg.scores, state.cumulative)) {
				return {
					...state,
					error:
						`score mismatch: server ${JSON.stringify(msg.scores)} ` +
						`vs client ${JSON.stringify(state.cumulative)}`,
					inFlight: false,
				};
			}
			return { ...state, lastSummary: msg, targetFruit: null };
		}
		case 'mode_set':
			return { ...state, mode: msg.mode, practice: msg.practice, inFlight: false };
		case 'rejected':
			return { ...state, inFlight: false };
		default:
			return { ...state, error: `unknown message ${JSON.stringify(msg)}`, inFlight: false };
	}
}
